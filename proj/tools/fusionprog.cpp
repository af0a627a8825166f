#include "fusionprog/cli.hpp"

int main(int argc, char** argv) { return fusionprog::cli::run(argc, argv); }
