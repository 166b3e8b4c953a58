#include "soup/cli.hpp"

int main(int argc, char** argv) { return soup::cli::main(argc, argv); }
