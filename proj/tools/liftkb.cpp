#include "liftkb/cli.hpp"

int main(int argc, char** argv) { return liftkb::cli::run(argc, argv); }
