#include "cli.hpp"

int main(int argc, char** argv) { return mmbm::cli::run(argc, argv); }
