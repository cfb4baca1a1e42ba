#include "mdil/commands.hpp"

int main(int argc, char** argv) { return mdil::cli_main(argc, argv); }
