#include <iostream>
#include <string>
#include <vector>

#include "shpjf/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return shpjf::cli::run(args, std::cout, std::cerr);
}
