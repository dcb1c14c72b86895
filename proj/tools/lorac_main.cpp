#include <vector>

#include "lorac/cli.hpp"

int main(int argc, char** argv) {
    return lorac::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
