#include <string>
#include <vector>

#include "ctxprobe/pipeline_cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return ctxprobe::run_command(args);
}
