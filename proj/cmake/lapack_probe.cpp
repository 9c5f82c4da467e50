#include "tmi/spectrum.hpp"

int main() { return tmi::lapack_eigensolver_ok() ? 0 : 1; }
