#include "eqi/cli.hpp"

int main(int argc, char** argv) { return eqi::cli_main(argc, argv); }
