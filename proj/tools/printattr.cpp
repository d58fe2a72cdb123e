#include "printattr/cli.hpp"

int main(int argc, char** argv) { return printattr::cli::run_cli(argc, argv); }
