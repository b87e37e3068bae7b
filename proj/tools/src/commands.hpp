#pragma once

#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace densedyn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Bad command-line usage that the argument parser cannot catch.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Runs `densedyn` with argv[0] omitted and returns the exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace densedyn::cli
