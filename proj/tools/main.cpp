#include <iostream>

#include "wavec2r/cli.hpp"

int main(int argc, char** argv) { return wavec2r::cli::run(argc, argv, std::cout, std::cerr); }
