#include "aru/cli.hpp"

int main(int argc, char** argv) { return aru::cli_main(argc, argv); }
