#include "priorbench/cli.hpp"

int main(int argc, char** argv) { return priorbench::cli_dispatch(argc, argv); }
