#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rff/gradcheck.hpp"

namespace rff {

// Small fixed-size instances of every trained objective, each with its noise
// drawn once per seed. Names accepted by run_gradcheck().
const std::vector<std::string>& gradcheck_losses();

struct GradSuiteRow {
  std::string loss;
  int seeds = 0;
  double max_rel_error32 = 0.0;  // float tape vs extended-precision differences
  double max_rel_error64 = 0.0;  // double tape vs extended-precision differences
  std::size_t checked = 0;
  std::size_t excluded = 0;
  std::string worst32, worst64;
};

// Seeds 1..seeds; h32 / h64 are the difference steps used when checking the
// float and the double tape.
GradSuiteRow run_gradcheck(const std::string& loss, int seeds, double h32, double h64,
                           double kink_radius = 10.0);

}  // namespace rff
