// Copyright 2026 The layoutsplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace layoutsplat {

class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Invalid input data. Carries every violation found, not just the first.
class ValidationError : public Error {
  public:
    explicit ValidationError(std::vector<std::string> issues);
    explicit ValidationError(std::string issue)
        : ValidationError(std::vector<std::string>{std::move(issue)}) {}

    const std::vector<std::string> &issues() const noexcept { return issues_; }

  private:
    std::vector<std::string> issues_;
};

class EmptySceneError : public Error {
  public:
    using Error::Error;
};

/// Degenerate numerics (singular covariance, zero-extent scene).
class NumericalError : public Error {
  public:
    using Error::Error;
};

/// Non-finite values produced by optimization.
class DivergenceError : public Error {
  public:
    using Error::Error;
};

class IoError : public Error {
  public:
    using Error::Error;
};

class ChecksumError : public Error {
  public:
    using Error::Error;
};

class VersionError : public Error {
  public:
    using Error::Error;
};

/// A guidance provider lacks the assets needed to answer a request.
class MissingAssetError : public Error {
  public:
    using Error::Error;
};

class NotFoundError : public Error {
  public:
    using Error::Error;
};

/// The host environment refused a resource (for example a port already in use).
class EnvironmentError : public Error {
  public:
    using Error::Error;
};

/// Invalid optimizer state-machine transition.
class StateError : public Error {
  public:
    using Error::Error;
};

} // namespace layoutsplat
