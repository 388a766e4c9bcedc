#include "spcnet/cli.hpp"

int main(int argc, char** argv) { return spcnet::cli::run(argc, argv); }
