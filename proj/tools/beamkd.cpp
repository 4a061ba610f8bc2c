#include "beamkd/cli.hpp"

int main(int argc, char** argv) { return beamkd::cli::run_command(argc, argv); }
