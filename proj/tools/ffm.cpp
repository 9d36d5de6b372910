#include "ffm/cli/app.hpp"

int main(int argc, char** argv) { return ffm::cli::run(argc, argv); }
