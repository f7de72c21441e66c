#include <iostream>

#include "fpgacomm/cli.hpp"

int main(int argc, char** argv) { return fpgacomm::cli::run(argc, argv, std::cout, std::cerr); }
