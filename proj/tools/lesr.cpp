#include "lesr/cli/app.hpp"

int main(int argc, char** argv) { return lesr::cli::run(argc, argv); }
