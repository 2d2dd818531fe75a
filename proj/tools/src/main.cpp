#include <iostream>

#include "halunet/cli.hpp"

int main(int argc, char** argv) { return halunet::run_cli(argc, argv, std::cin, std::cout, std::cerr); }
