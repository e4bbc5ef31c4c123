#include <string>
#include <vector>

#include "lebm/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return lebm::cli::run(std::move(args));
}
