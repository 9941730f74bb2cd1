#include "ucan/cli.hpp"

int main(int argc, char** argv) { return ucan::cli::run(argc, argv); }
