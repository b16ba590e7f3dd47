#include <iostream>

#include "cpmm/cli.hpp"

int main(int argc, char** argv) { return cpmm::cli::run(argc, argv, std::cout, std::cerr); }
