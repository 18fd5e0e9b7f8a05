#pragma once

// Command-line front-end. run_cli returns the process exit code:
// 0 success, 2 usage or configuration error, 3 data error,
// 4 missing artifact, 1 anything else.

#include <iosfwd>
#include <string>
#include <vector>

namespace corrsched::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitMissing = 4;

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace corrsched::cli
