// survkit command-line interface (subcommands wired up incrementally).
#include <iostream>

#include "survkit/survkit.hpp"

int main() {
  std::cout << "survkit\n";
  return 0;
}
