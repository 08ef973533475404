#include "siftlab/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return siftlab::cli::run(argc, argv, std::cout, std::cerr); }
