#include "triage/facade.hpp"

int main(int argc, char** argv) { return triage::facade::cli_main(argc, argv); }
