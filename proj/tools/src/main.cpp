#include <iostream>

#include "raft/cli/commands.hpp"

int main(int argc, char** argv) { return raft::cli::run(argc, argv, std::cout, std::cerr); }
