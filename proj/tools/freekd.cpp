#include <string>
#include <vector>

#include "freekd/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return freekd::cli::run(args);
}
