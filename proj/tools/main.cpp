#include <iostream>

#include "pstory/cli.hpp"

int main(int argc, char** argv) { return pstory::run_cli(argc, argv, std::cout, std::cerr); }
