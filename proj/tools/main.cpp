#include "cli.hpp"

int main(int argc, char** argv) { return lorid::cli::run(argc, argv); }
