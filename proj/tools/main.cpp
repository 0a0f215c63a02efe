#include "cli.hpp"

int main(int argc, char** argv) { return anat9::cli_main(argc, argv); }
