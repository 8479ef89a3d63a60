#include "cli.hpp"

int main(int argc, char** argv) { return hetgraph::cli::run_cli(argc, argv); }
