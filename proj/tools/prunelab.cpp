#include <iostream>

#include "prunelab/cli.hpp"

int main(int argc, char** argv) { return prunelab::cli(argc, argv, std::cout, std::cerr); }
