#include "commands.hpp"

int main(int argc, char **argv) { return se3ham::cli::cli_main(argc, argv); }
