#include <string>
#include <vector>

#include "pwrules/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return pwrules::cli::run(args);
}
