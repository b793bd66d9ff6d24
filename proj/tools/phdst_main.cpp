#include <vector>

#include "phdst/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return phdst::cli::run_command(std::move(args));
}
