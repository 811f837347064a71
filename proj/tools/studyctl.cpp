#include <iostream>

#include "study/cli.hpp"

int main(int argc, char** argv) { return study::run_cli(argc, argv, std::cout, std::cerr); }
