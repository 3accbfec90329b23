#include <vector>

#include "merlean/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return merlean::run_cli(args);
}
