#include <iostream>

#include "hmmr/cli/cli.hpp"

int main(int argc, char** argv) { return hmmr::cli::run(argc, argv, std::cout, std::cerr); }
