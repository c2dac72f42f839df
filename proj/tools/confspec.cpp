#include "confspec/cli.hpp"

int main(int argc, char** argv) { return confspec::cli::run_cli(argc, argv); }
