#include "esscher/cli.hpp"

int main(int argc, char** argv) { return esscher::cli::run(argc, argv); }
