#pragma once

#include <ostream>

namespace dropblock::tooling {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `dropblock` tool. Subcommands: gamma, mask, rate,
/// schedule, train, sweep, gradcheck. Returns kExitUsage for bad flags,
/// arguments or configs and kExitRuntime for failures while running.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dropblock::tooling
