#include "cli_app.hpp"

int main(int argc, char** argv) { return penprior::cli::run(argc, argv); }
