#pragma once

#include <iosfwd>

namespace marconi {

// Exit codes of the command-line front end.
inline constexpr int kExitOk = 0;
inline constexpr int kExitReplayFailed = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitMissingFile = 3;
inline constexpr int kExitBadConfig = 4;

/// Entry point of the `marconi-sim` tool: gen-trace, run, compare, sweep.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace marconi
