#include <iostream>

#include "dropblock/tooling/cli.hpp"

int main(int argc, char** argv) {
  return dropblock::tooling::cli_main(argc, argv, std::cout, std::cerr);
}
