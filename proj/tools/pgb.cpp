#include "pgb_cli.hpp"

int main(int argc, char** argv) { return pgb::cli::run(argc, argv); }
