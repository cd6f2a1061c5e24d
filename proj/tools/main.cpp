#include "cli.hpp"

int main(int argc, char** argv) { return prefconflict::cli::run_cli(argc, argv); }
