#include <iostream>

#include "ragcrit/cli.hpp"

int main(int argc, char** argv) { return ragcrit::cli::run_cli(argc, argv, std::cout, std::cerr); }
