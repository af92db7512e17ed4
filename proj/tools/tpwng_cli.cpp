#include "tpwng/cli.hpp"

int main(int argc, char** argv) { return tpwng::cli::run(argc, argv); }
