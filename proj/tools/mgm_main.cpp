#include <string>
#include <vector>

#include "mgm/cli.hpp"

int main(int argc, char** argv) {
  return mgm::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
