#include <iostream>
#include <string>
#include <vector>

#include "morphogen/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return morphogen::run_cli(args, std::cout, std::cerr);
}
