#include "commands.hpp"

int main(int argc, char** argv) { return lcs::cli::run(argc, argv); }
