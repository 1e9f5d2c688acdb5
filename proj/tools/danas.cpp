// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#include "danas/cli/commands.hpp"

int main(int argc, char** argv) { return danas::cli::run(argc, argv); }
