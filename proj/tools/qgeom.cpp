#include <string>
#include <vector>

#include "qgeom/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return qgeom::cli::run(args);
}
