#include "finecir/cli/app.hpp"

int main(int argc, char** argv) { return finecir::cli::run(argc, argv); }
