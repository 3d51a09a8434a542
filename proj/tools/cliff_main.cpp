// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "cliff/app.hpp"

int main(int argc, char** argv) { return cliff::run_cli(argc, argv, std::cout, std::cerr); }
