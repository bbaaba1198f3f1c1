#include <string>
#include <vector>

#include "sfl/cli.hpp"

int main(int argc, char** argv) {
  return sfl::cli_main(std::vector<std::string>(argv + 1, argv + argc));
}
