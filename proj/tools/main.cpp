#include "cli.hpp"

int main(int argc, char** argv) { return olearn::cli::run(argc, argv); }
