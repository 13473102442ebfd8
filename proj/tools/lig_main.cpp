#include "lig/cli.hpp"

int main(int argc, char** argv) { return lig::cli::run(argc, argv); }
