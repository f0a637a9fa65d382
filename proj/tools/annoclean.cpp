#include <iostream>
#include <string>
#include <vector>

#include "annoclean/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return annoclean::run_cli(args, std::cout, std::cerr);
}
