#include "umfi/cli.hpp"

int main(int argc, char** argv) { return umfi::dispatch(argc, argv); }
