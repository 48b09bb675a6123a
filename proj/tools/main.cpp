#include "adstage/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return adstage::run_cli(argc, argv, std::cout, std::cerr); }
