#include <iostream>

#include "gramgan/cli.hpp"

int main(int argc, char** argv) {
  return gramgan::run_cli({argv + 1, argv + argc}, std::cout, std::cerr);
}
