#include "wdro/cli.hpp"

int main(int argc, char** argv) { return wdro::run_cli(argc, argv); }
