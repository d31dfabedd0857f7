#include <string>
#include <vector>

#include "sptlb/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return sptlb::cli::run(args);
}
