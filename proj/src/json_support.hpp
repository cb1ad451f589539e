// Copyright 2026 The layoutsplat Authors
// SPDX-License-Identifier: Apache-2.0

// JSON helpers shared by scene-io, config and the edit service.

#pragma once

#include "layoutsplat/scene.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace layoutsplat::detail {

using Json = nlohmann::ordered_json;

/// Accumulates schema issues, each prefixed with the JSON path it concerns.
class IssueSink {
  public:
    void add(const std::string &path, const std::string &what) {
        issues_.push_back(path.empty() ? what : path + ": " + what);
    }
    bool empty() const { return issues_.empty(); }
    std::vector<std::string> take() { return std::move(issues_); }
    /// Throws ValidationError if anything was recorded.
    void raise();

  private:
    std::vector<std::string> issues_;
};

std::string join_path(const std::string &base, const std::string &key);
std::string index_path(const std::string &base, std::size_t i);

/// Reports keys of `obj` that are not in `allowed`.
void reject_unknown_keys(const Json &obj, const std::string &path,
                         std::initializer_list<const char *> allowed, IssueSink &issues);

std::optional<double> get_number(const Json &obj, const char *key, const std::string &path,
                                 IssueSink &issues, bool required);
std::optional<std::string> get_string(const Json &obj, const char *key, const std::string &path,
                                      IssueSink &issues, bool required);
std::optional<bool> get_bool(const Json &obj, const char *key, const std::string &path,
                             IssueSink &issues);
std::optional<Vec3> get_vec3(const Json &obj, const char *key, const std::string &path,
                             IssueSink &issues, bool required, bool positive = false);

Json vec3_to_json(const Vec3 &v);

/// Degrees value whose conversion back to radians reproduces `yaw` exactly.
double yaw_to_degrees(double yaw);

Json layout_to_json(const InstanceLayout &layout);
/// Parses one instance object; returns nullopt after recording issues.
std::optional<InstanceLayout> layout_from_json(const Json &obj, const std::string &path,
                                               IssueSink &issues);

/// Parses text or throws ValidationError with the parser's message.
Json parse_json(std::string_view text, const std::string &what);

} // namespace layoutsplat::detail
