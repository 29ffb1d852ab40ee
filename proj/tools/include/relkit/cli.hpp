#pragma once

#include <string>
#include <vector>

namespace relkit::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitRuntime = 3,
};

/// Runs the command line (args excludes the program name) and returns the
/// process exit code. Never throws.
int run(const std::vector<std::string>& args);

/// Merges `key=value` lines from a config file into args. Keys already given
/// as flags on the command line keep their command-line value.
std::vector<std::string> apply_config_file(const std::vector<std::string>& args);

}  // namespace relkit::cli
