#include <iostream>
#include <string>
#include <vector>

#include "deixis/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return deixis::run_cli(std::move(args), std::cout, std::cerr);
}
