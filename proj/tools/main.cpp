#include <iostream>

#include "cenhdr/cli.hpp"

int main(int argc, char** argv) { return cenhdr::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr); }
