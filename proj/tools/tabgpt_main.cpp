#include <iostream>

#include "tabgpt/cli.hpp"

int main(int argc, char** argv) {
    return tabgpt::cli::run(argc, argv, std::cout, std::cerr);
}
