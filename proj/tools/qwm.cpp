#include "qwm/cli.hpp"

int main(int argc, char** argv) { return qwm::cli::run(argc, argv); }
