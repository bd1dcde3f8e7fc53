#include <iostream>

#include "dstt/cli.hpp"

int main(int argc, char** argv) { return dstt::cli::run(argc, argv, std::cout, std::cerr); }
