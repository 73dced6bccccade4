#include <iostream>
#include <string>
#include <vector>

#include "bld/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return bld::run_cli(args, std::cout, std::cerr);
}
