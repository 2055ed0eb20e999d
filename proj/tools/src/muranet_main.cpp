#include "muranet/cli.hpp"

int main(int argc, char** argv) { return mura::run_command(argc, argv); }
