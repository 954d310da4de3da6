#include "amcmc/cli/commands.hpp"

int main(int argc, char** argv) { return amcmc::cli::main_entry(argc, argv); }
