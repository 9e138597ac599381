#include <string>
#include <vector>

#include "roadgs/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return roadgs::run_cli(args);
}
