// Copyright 2026 The layoutsplat Authors
// SPDX-License-Identifier: Apache-2.0

#include "layoutsplat/errors.hpp"

namespace layoutsplat {

namespace {

std::string join_issues(const std::vector<std::string> &issues) {
    std::string out;
    for (const auto &issue : issues) {
        if (!out.empty()) {
            out += "; ";
        }
        out += issue;
    }
    return out;
}

} // namespace

ValidationError::ValidationError(std::vector<std::string> issues)
    : Error(join_issues(issues)), issues_(std::move(issues)) {}

} // namespace layoutsplat
