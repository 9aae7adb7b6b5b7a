#include "pmapcut/cli.hpp"

int main(int argc, char** argv) { return pmapcut::cli_main(argc, argv); }
