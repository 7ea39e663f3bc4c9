#pragma once

#include <iosfwd>

namespace layerstack {

// Exit codes of the command-line front end.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;          // usage, config or I/O error
inline constexpr int kExitNotConverged = 2;

// Subcommands: run, sweep-theta, mesh-convergence, oracle-compare. See README.md.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace layerstack
