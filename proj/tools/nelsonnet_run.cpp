#include <string>
#include <vector>

#include "nelsonnet/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return nelsonnet::cli::execute_command(args);
}
