#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace gramgan {

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitTrainingAbort = 3;

/// Runs the gramgan command line. args excludes the program name.
/// Messages go to out; errors go to err.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gramgan
