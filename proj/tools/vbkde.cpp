#include <iostream>

#include "vbkde/cli/app.hpp"

int main(int argc, char** argv) { return vbkde::cli::run(argc, argv, std::cout, std::cerr); }
