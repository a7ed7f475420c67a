#include "abelscale/cli.hpp"

int main(int argc, char** argv) { return abelscale::main_entry(argc, argv); }
