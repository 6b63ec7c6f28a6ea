#include "cammel/cli.hpp"

int main(int argc, char** argv) { return cammel::parse_and_dispatch(argc, argv); }
