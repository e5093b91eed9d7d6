#include <string>
#include <vector>

#include "spkclust/cli.hpp"

int main(int argc, char** argv) {
  return spkclust::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
