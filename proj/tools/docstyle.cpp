#include "docstyle/cli.hpp"

int main(int argc, char** argv) { return docstyle::run_command(argc, argv); }
