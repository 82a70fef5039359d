#include <cstdio>
int main() { std::puts("qpgordon: subcommands pending"); return 1; }
