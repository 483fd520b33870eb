#include "scfm/cli.hpp"

int main(int argc, char** argv) {
    return scfm::run_cli(argc, argv);
}
