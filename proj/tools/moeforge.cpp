// Copyright 2026 The moeforge Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <string>
#include <vector>

#include "moeforge/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return moeforge::cli::dispatch(args, std::cout, std::cerr);
}
