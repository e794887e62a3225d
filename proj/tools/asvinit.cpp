#include <iostream>

#include "asv/cli.hpp"

int main(int argc, char** argv) { return asv::run_cli(argc, argv, std::cout, std::cerr); }
