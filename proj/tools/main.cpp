#include <iostream>

#include "npiv/cli.hpp"

int main(int argc, char** argv) { return npiv::cli::main_entry(argc, argv, std::cout, std::cerr); }
