#include <noisy_cg/cli.hpp>

int main(int argc, char** argv) { return noisy_cg::cli::parse_and_run(argc, argv); }
