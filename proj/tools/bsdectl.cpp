#include <iostream>

#include "bsdectl/cli.hpp"

int main(int argc, char** argv) {
  return bsdectl::cli::run(argc, argv, std::cout, std::cerr);
}
