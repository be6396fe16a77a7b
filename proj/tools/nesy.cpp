#include <iostream>

#include "nesy/cli.hpp"

int main(int argc, char** argv) { return nesy::cli::run(argc, argv, std::cout, std::cerr); }
