#include <iostream>

#include "rff/cli.hpp"

int main(int argc, char** argv) { return rff::run(argc, argv, std::cout, std::cerr); }
