#pragma once

#include <string>
#include <vector>

namespace trajloom {

// Exit codes beyond 0 (success) and 1 (usage or other failure).
enum ExitCode : int { exit_ok = 0, exit_failure = 1, exit_format = 2, exit_config = 3, exit_numerical = 4 };

// Runs one subcommand. args[0] is the program name.
int dispatch(const std::vector<std::string>& args);

}  // namespace trajloom
