#pragma once

#include <string>
#include <vector>

namespace lorac {

// Full command-line surface; returns the process exit code.
// 0 success, 1 computation failure, 2 usage / I/O error.
int run_cli(const std::vector<std::string>& args);

}  // namespace lorac
