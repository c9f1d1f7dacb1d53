#include "detaug/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
  return detaug::cli_main({argv + 1, argv + argc}, std::cout, std::cerr);
}
