#include <iostream>

#include "ikm/cli.hpp"

int main(int argc, char** argv) {
  return ikm::cli::run({argv + 1, argv + argc}, std::cout, std::cerr);
}
