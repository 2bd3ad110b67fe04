#include <iostream>

#include "fcaccel/cli.hpp"

int main(int argc, char** argv) { return fcaccel::cli::run(argc, argv, std::cout, std::cerr); }
