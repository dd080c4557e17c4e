#include "dcm/cli.hpp"

int main(int argc, char** argv) { return dcm::cli::run(argc, argv); }
