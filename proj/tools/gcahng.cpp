#include "gcahng/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return gcahng::cli::main(argc, argv, std::cout, std::cerr); }
