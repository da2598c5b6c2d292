#include <string>
#include <vector>

#include "ssn/cli_app.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return ssn::cli::run(std::move(args));
}
