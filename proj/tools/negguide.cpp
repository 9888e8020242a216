#include <iostream>

#include "negguide/cli/commands.hpp"

int main(int argc, char** argv) {
  return negguide::cli::run(argc, argv, std::cout, std::cerr);
}
