#include "expcot/cli.hpp"

int main(int argc, char** argv) {
    return expcot::run_cli(argc, argv);
}
