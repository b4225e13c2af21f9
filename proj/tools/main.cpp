#include "cloudano/cli.hpp"

int main(int argc, char** argv) { return cloudano::cli_main(argc, argv); }
