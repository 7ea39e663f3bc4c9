#include <iostream>

#include "layerstack/cli.hpp"

int main(int argc, char** argv) { return layerstack::run_cli(argc, argv, std::cout, std::cerr); }
