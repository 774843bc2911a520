#include <iostream>
#include <string>
#include <vector>

#include "msfcev/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return msfcev::cli::run(args, std::cout, std::cerr);
}
