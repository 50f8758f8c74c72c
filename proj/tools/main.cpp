#include <iostream>

#include "corefd/cli.hpp"

int main(int argc, char** argv) { return corefd::cli::run(argc, argv, std::cout, std::cerr); }
