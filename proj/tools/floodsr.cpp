#include "floodsr/cli.hpp"

int main(int argc, char** argv) { return floodsr::cli::main_entry(argc, argv); }
