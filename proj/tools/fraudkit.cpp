#include "fraudkit/cli.hpp"

int main(int argc, char** argv) { return fraudkit::run_cli(argc, argv); }
