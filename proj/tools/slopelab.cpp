#include <iostream>
#include <string>
#include <vector>

#include "slopelab/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    return slopelab::cli::run(args, std::cout, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "slopelab: " << e.what() << '\n';
    return 1;
  }
}
