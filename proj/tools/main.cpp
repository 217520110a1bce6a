#include <iostream>

#include "qmatch_cli.hpp"

int main(int argc, char** argv) { return qmatch::cli::run_cli(argc, argv, std::cout, std::cerr); }
