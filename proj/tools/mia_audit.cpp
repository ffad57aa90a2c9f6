#include <iostream>
#include <string>
#include <vector>

#include "mia/cli.hpp"
#include "mia/log.hpp"

int main(int argc, char** argv) {
  mia::log::init_from_env();
  const std::vector<std::string> args(argv + 1, argv + argc);
  return mia::cli::dispatch(args, std::cout, std::cerr);
}
