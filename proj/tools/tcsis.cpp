#include "tcsis/cli.hpp"

int main(int argc, char** argv) { return tcsis::cli_main(argc, argv); }
