#include "odflow/cli.hpp"

int main(int argc, char** argv) { return odflow::run_cli(argc, argv); }
