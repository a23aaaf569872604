#include "ehdnas/cli.hpp"

int main(int argc, char** argv) { return ehdnas::cli::run(argc, argv); }
