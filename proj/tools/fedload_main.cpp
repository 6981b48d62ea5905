#include "fedload/cli.hpp"

int main(int argc, char** argv) { return fedload::cli::dispatch(argc, argv); }
