#pragma once

#include <string>
#include <vector>

namespace pwrules::cli {

// Runs one CLI invocation (argv without the program name).
// Exit codes: 0 ok, 1 domain error, 2 usage/config error.
int run(const std::vector<std::string>& args);

}  // namespace pwrules::cli
