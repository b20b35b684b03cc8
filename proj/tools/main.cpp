#include "icleval/commands.hpp"

#include <iostream>

int main(int argc, char** argv) { return icleval::run_cli(argc, argv, std::cerr); }
