#include <iostream>

#include "vimp/cli.hpp"

int main(int argc, char** argv) { return vimp::cli::run(argc, argv, std::cout, std::cerr); }
