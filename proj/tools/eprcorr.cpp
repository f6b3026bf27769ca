#include <epr/cli/runner.hpp>

int main(int argc, char** argv) { return epr::cli::run_cli(argc, argv); }
