#include <string>
#include <vector>

#include "relkit/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return relkit::cli::run(args);
}
