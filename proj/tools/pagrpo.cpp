#include <iostream>

#include "pagrpo/cli.hpp"

int main(int argc, char** argv) { return pagrpo::cli::run(argc, argv, std::cout, std::cerr); }
