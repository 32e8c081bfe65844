#include "edpack/cli.hpp"

int main(int argc, char** argv) { return edpack::cli::run_cli(argc, argv); }
