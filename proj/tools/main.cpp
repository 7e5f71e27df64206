#include "hebb/cli.hpp"

int main(int argc, char** argv) { return hebb::run_cli(argc, argv); }
