#pragma once

#include <string>
#include <vector>

namespace spkclust::cli {

/// Exit codes of the command-line tool.
enum ExitCode : int {
  kSuccess = 0,
  kUsage = 1,
  kDataError = 2,
  kInternal = 3,
};

/// Prefix for environment-variable overrides, e.g. SPKCLUST_MIN_CLUSTER_SIZE.
inline constexpr char kEnvPrefix[] = "SPKCLUST_";

/// Entry point shared by the executable and the tests. `args` excludes argv[0].
int run(const std::vector<std::string>& args);

}  // namespace spkclust::cli
