#include <iostream>

#include "corrsched/cli.hpp"

int main(int argc, char** argv) { return corrsched::cli::main(argc, argv, std::cout, std::cerr); }
