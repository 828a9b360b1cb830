#pragma once

#include <iosfwd>

namespace bicl::harness {

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitVerification = 3;
inline constexpr int kExitNumeric = 4;

/// Entry point of the `bicl` tool; returns the process exit code. Progress
/// goes to `err`, short result summaries to `out`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace bicl::harness
