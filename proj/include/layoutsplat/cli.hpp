// Copyright 2026 The layoutsplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <exception>
#include <ostream>
#include <string>
#include <vector>

namespace layoutsplat {

/// Process exit codes shared by every command.
enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitValidation = 2,
    kExitIo = 3,
    kExitEnvironment = 4,
    kExitDivergence = 5,
};

/// Exit code for an exception escaping a command.
int exit_code_for(const std::exception &e);

/// Runs `layoutsplat <args...>`; args excludes the program name.
int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

} // namespace layoutsplat
