// Copyright (C) 2026 The rotdrag Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "rotdrag/cli.hpp"

int main(int argc, char** argv) { return rotdrag::run_cli(argc, argv, std::cout, std::cerr); }
