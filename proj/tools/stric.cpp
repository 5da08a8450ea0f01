#include "stric/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return stric::cli::run(argc, argv, std::cout, std::cerr); }
