#include <iostream>

#include "bicl/harness/cli.hpp"

int main(int argc, char** argv) { return bicl::harness::run_cli(argc, argv, std::cout, std::cerr); }
