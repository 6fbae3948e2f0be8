#include "rff/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "rff/errors.hpp"

namespace rff::io {

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string format_exact(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string trim(std::string_view s) {
  const char* ws = " \t\r\n";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

double parse_real(std::string_view s, const std::string& context) {
  std::string t = trim(s);
  if (t == "inf" || t == "+inf") return std::numeric_limits<double>::infinity();
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size())
    throw LoadError(context + ": cannot parse real number '" + t + "'");
  return v;
}

long parse_int(std::string_view s, const std::string& context) {
  std::string t = trim(s);
  long v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size())
    throw LoadError(context + ": cannot parse integer '" + t + "'");
  return v;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("missing file: " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  return lines;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

Tensor read_matrix_csv(const std::filesystem::path& path) {
  auto lines = read_lines(path);
  const std::string name = path.filename().string();
  std::size_t cols = 0;
  std::vector<float> data;
  for (std::size_t r = 0; r < lines.size(); ++r) {
    const std::string ctx = name + " row " + std::to_string(r + 1);
    auto fields = split(lines[r], ',');
    if (r == 0) cols = fields.size();
    if (fields.size() != cols)
      throw LoadError(ctx + ": dimension mismatch, expected " + std::to_string(cols) +
                      " columns, found " + std::to_string(fields.size()));
    for (const auto& f : fields) data.push_back(static_cast<float>(parse_real(f, ctx)));
  }
  return Tensor(lines.size(), cols, std::move(data));
}

void write_matrix_csv(const std::filesystem::path& path, const Tensor& t) {
  std::ostringstream out;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) {
      if (c) out << ',';
      out << format_real(t(r, c));
    }
    out << '\n';
  }
  write_text(path, out.str());
}

}  // namespace rff::io
