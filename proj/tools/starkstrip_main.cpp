#include "starkstrip/cli.hpp"

int main(int argc, char** argv) {
  return starkstrip::cli::run_cli(argc, argv);
}
