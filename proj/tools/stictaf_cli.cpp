#include <iostream>

#include "stictaf/cli.hpp"

int main(int argc, char** argv) { return stictaf::run_cli(argc, argv, std::cout, std::cerr); }
