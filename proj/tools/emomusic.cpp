#include <iostream>

#include "emomusic/cli/app.hpp"

int main(int argc, char** argv) {
  return emomusic::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
