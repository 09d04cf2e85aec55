// Copyright (c) 2026, fsnet-cpp authors
// SPDX-License-Identifier: Apache-2.0

#include "fsnet/cli.hpp"

int main(int argc, char** argv) { return fsnet::cli::run_cli(argc, argv); }
