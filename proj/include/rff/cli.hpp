#pragma once

#include <ostream>

namespace rff {

// Entry point behind the rffgzsl binary. Exit codes: 0 success, 1 usage or
// validation error, 2 runtime/numeric error (and a failed gradcheck).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rff
