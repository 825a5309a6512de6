#include "comhe/cli.hpp"

int main(int argc, char** argv) { return comhe::cli::run(argc, argv); }
