#include "grammcmc/cli.hpp"

int main(int argc, char** argv) { return grammcmc::run_cli(argc, argv); }
