#include "aaa/cli/cli.hpp"

int main(int argc, char** argv) { return aaa::cli::run(argc, argv); }
