#include <vector>
#include <string>

#include "vscout/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return vscout::cli::run(args);
}
