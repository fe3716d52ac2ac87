#include "darwinbounds/cli.hpp"

int main(int argc, char** argv) { return darwinbounds::run_cli(argc, argv); }
