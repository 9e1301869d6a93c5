#include "gec/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return gec::cli::parse_and_dispatch(argc, argv, std::cout, std::cerr); }
