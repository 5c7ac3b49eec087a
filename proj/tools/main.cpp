#include <iostream>

#include "tempid/cli.hpp"

int main(int argc, char** argv) { return tempid::cli::run(argc, argv, std::cout, std::cerr); }
