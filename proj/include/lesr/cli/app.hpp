#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lesr::cli {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitUsage = 2,
  kExitData = 3,
  kExitDivergence = 4,
};

// Entry point of the `lesr` tool. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

// Flat key=value file: blank lines and '#' comments ignored. Keys are the
// long option names without the leading dashes.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path);

}  // namespace lesr::cli
