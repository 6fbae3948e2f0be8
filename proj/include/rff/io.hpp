#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "rff/tensor.hpp"

namespace rff::io {

// Shortest decimal text of at most 9 significant digits (%.9g); exact for
// 32-bit floats.
std::string format_real(double v);
// Shortest text that parses back to exactly `v`.
std::string format_exact(double v);

std::vector<std::string> split(std::string_view s, char sep);
std::string trim(std::string_view s);

// Parse errors carry the file name and 1-based line as context.
double parse_real(std::string_view s, const std::string& context);
long parse_int(std::string_view s, const std::string& context);

std::vector<std::string> read_lines(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

// Comma-separated rows. read_matrix_csv rejects ragged rows.
Tensor read_matrix_csv(const std::filesystem::path& path);
void write_matrix_csv(const std::filesystem::path& path, const Tensor& t);

}  // namespace rff::io
