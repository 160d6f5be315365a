#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace qdtb::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitConvergence = 4;

/// Runs one command line (without the program name) and returns the exit
/// code. Results go to files; progress and errors to `out` and `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Keys accepted in configuration files with their defaults ("" = no default).
const std::vector<std::pair<std::string, std::string>>& config_keys();

}  // namespace qdtb::cli
