// Copyright 2026 The antismooth Authors
// SPDX-License-Identifier: Apache-2.0

#include <string>
#include <vector>

#include "cli_app.hpp"

int main(int argc, char** argv) {
  return antismooth::cli::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
