#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace qmig::cli {

// Exit codes: 0 success, 1 run completed with scan-level failures, 2 usage
// or I/O error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitScanFailures = 1;
inline constexpr int kExitUsage = 2;

// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace qmig::cli
