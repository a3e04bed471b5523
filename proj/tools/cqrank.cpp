#include <iostream>

#include "cqrank/cli.hpp"

int main(int argc, char** argv) { return cqrank::cli::run(argc, argv, std::cout, std::cerr); }
