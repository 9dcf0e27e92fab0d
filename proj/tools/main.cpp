#include <iostream>

#include "patchdenoise/cli.hpp"

int main(int argc, char** argv) { return patchdenoise::cli::run(argc, argv, std::cout, std::cerr); }
