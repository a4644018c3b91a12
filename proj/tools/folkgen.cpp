#include <iostream>

#include "folkgen/cli.hpp"

int main(int argc, char** argv) { return folkgen::cli::cli_main(argc, argv, std::cout, std::cerr); }
