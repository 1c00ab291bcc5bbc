#include <string>
#include <vector>

#include "oob/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return oob::run_cli(args);
}
