#pragma once

#include <iosfwd>

namespace fpgacomm::cli {

/// Exit codes: 0 success, 1 configuration or usage error, 2 runtime
/// invariant violation.
inline constexpr int kOk = 0;
inline constexpr int kConfigError = 1;
inline constexpr int kRuntimeError = 2;

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fpgacomm::cli
