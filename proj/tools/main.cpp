#include "capstext/cli.hpp"

int main(int argc, char** argv) { return capstext::run_cli(argc, argv); }
