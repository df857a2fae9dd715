#include "alignreid/cli.hpp"

int main(int argc, char** argv) { return areid::cli::run(argc, argv); }
