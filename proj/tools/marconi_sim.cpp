#include <iostream>

#include "marconi/cli.hpp"

int main(int argc, char** argv) { return marconi::run_cli(argc, argv, std::cout, std::cerr); }
