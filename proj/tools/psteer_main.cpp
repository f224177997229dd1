#include "psteer/cli.hpp"

int main(int argc, char** argv) { return psteer::cli::run_cli(argc, argv); }
