#include <iostream>

#include "cotsfa/cli.hpp"

int main(int argc, char** argv) { return cotsfa::cli::run(argc, argv, std::cout, std::cerr); }
