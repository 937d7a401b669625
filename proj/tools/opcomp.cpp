#include "opcomp/cli.hpp"

int main(int argc, char** argv) { return opcomp::cli::run(argc, argv); }
