#include <vector>

#include "crowdlabel/cli.hpp"

int main(int argc, char** argv) {
  return crowdlabel::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
