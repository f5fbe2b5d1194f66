#include "cli.hpp"

int main(int argc, char** argv) { return careseq::cli::run(argc, argv); }
