#include "maskboard/cli.hpp"

int main(int argc, char** argv) { return maskboard::cli::run(argc, argv); }
