#pragma once

namespace expcot {

inline constexpr const char* kVersion = "1.0.0";

// Exit codes: 0 success, 1 fatal configuration or input error, 2 run
// completed but some samples failed.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitPartial = 2;

// Full command-line entry point (subcommands generate, score, emit-dataset,
// validate, stats). Never throws; diagnostics go to stderr.
int run_cli(int argc, const char* const* argv);

} // namespace expcot
