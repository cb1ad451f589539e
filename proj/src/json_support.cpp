// Copyright 2026 The layoutsplat Authors
// SPDX-License-Identifier: Apache-2.0

#include "json_support.hpp"

#include "layoutsplat/errors.hpp"

#include <cmath>
#include <set>

namespace layoutsplat::detail {

void IssueSink::raise() {
    if (!issues_.empty()) {
        throw ValidationError(take());
    }
}

std::string join_path(const std::string &base, const std::string &key) {
    return base.empty() ? key : base + "." + key;
}

std::string index_path(const std::string &base, std::size_t i) {
    return base + "[" + std::to_string(i) + "]";
}

void reject_unknown_keys(const Json &obj, const std::string &path,
                         std::initializer_list<const char *> allowed, IssueSink &issues) {
    if (!obj.is_object()) {
        return;
    }
    const std::set<std::string> known(allowed.begin(), allowed.end());
    for (const auto &item : obj.items()) {
        if (!known.contains(item.key())) {
            issues.add(join_path(path, item.key()), "unknown field");
        }
    }
}

std::optional<double> get_number(const Json &obj, const char *key, const std::string &path,
                                 IssueSink &issues, bool required) {
    const std::string p = join_path(path, key);
    const auto it = obj.find(key);
    if (it == obj.end()) {
        if (required) {
            issues.add(p, "missing required number");
        }
        return std::nullopt;
    }
    if (!it->is_number()) {
        issues.add(p, "must be a number");
        return std::nullopt;
    }
    const double v = it->get<double>();
    if (!std::isfinite(v)) {
        issues.add(p, "must be finite");
        return std::nullopt;
    }
    return v;
}

std::optional<std::string> get_string(const Json &obj, const char *key, const std::string &path,
                                      IssueSink &issues, bool required) {
    const std::string p = join_path(path, key);
    const auto it = obj.find(key);
    if (it == obj.end()) {
        if (required) {
            issues.add(p, "missing required string");
        }
        return std::nullopt;
    }
    if (!it->is_string()) {
        issues.add(p, "must be a string");
        return std::nullopt;
    }
    return it->get<std::string>();
}

std::optional<bool> get_bool(const Json &obj, const char *key, const std::string &path,
                             IssueSink &issues) {
    const auto it = obj.find(key);
    if (it == obj.end()) {
        return std::nullopt;
    }
    if (!it->is_boolean()) {
        issues.add(join_path(path, key), "must be true or false");
        return std::nullopt;
    }
    return it->get<bool>();
}

std::optional<Vec3> get_vec3(const Json &obj, const char *key, const std::string &path,
                             IssueSink &issues, bool required, bool positive) {
    const std::string p = join_path(path, key);
    const auto it = obj.find(key);
    if (it == obj.end()) {
        if (required) {
            issues.add(p, "missing required 3-vector");
        }
        return std::nullopt;
    }
    if (!it->is_array() || it->size() != 3) {
        issues.add(p, "must be an array of 3 numbers");
        return std::nullopt;
    }
    Vec3 v;
    bool ok = true;
    for (std::size_t a = 0; a < 3; ++a) {
        const Json &e = (*it)[a];
        if (!e.is_number()) {
            issues.add(index_path(p, a), "must be a number");
            ok = false;
            continue;
        }
        v[static_cast<int>(a)] = e.get<double>();
        if (!std::isfinite(v[static_cast<int>(a)])) {
            issues.add(index_path(p, a), "must be finite");
            ok = false;
        } else if (positive && v[static_cast<int>(a)] <= 0.0) {
            issues.add(index_path(p, a), "must be > 0");
            ok = false;
        }
    }
    return ok ? std::optional<Vec3>(v) : std::nullopt;
}

Json vec3_to_json(const Vec3 &v) { return Json::array({v.x(), v.y(), v.z()}); }

double yaw_to_degrees(double yaw) {
    const double base = radians_to_degrees(yaw);
    const auto back = [](double d) { return wrap_angle(degrees_to_radians(d)); };
    if (back(base) == yaw) {
        return base;
    }
    double up = base;
    double down = base;
    for (int i = 0; i < 64; ++i) {
        up = std::nextafter(up, HUGE_VAL);
        if (back(up) == yaw) {
            return up;
        }
        down = std::nextafter(down, -HUGE_VAL);
        if (back(down) == yaw) {
            return down;
        }
    }
    return base;
}

Json layout_to_json(const InstanceLayout &layout) {
    Json j;
    j["id"] = layout.id;
    j["prompt"] = layout.prompt;
    j["center"] = vec3_to_json(layout.center);
    j["extents"] = vec3_to_json(layout.extents);
    j["scale_factor"] = layout.scale_factor;
    j["yaw_degrees"] = yaw_to_degrees(layout.yaw);
    j["opacity_gain"] = layout.opacity_gain;
    j["learnable"] = {{"center", layout.learnable.center},
                      {"scale", layout.learnable.scale_factor},
                      {"yaw", layout.learnable.yaw},
                      {"opacity", layout.learnable.opacity}};
    return j;
}

std::optional<InstanceLayout> layout_from_json(const Json &obj, const std::string &path,
                                               IssueSink &issues) {
    if (!obj.is_object()) {
        issues.add(path, "must be an object");
        return std::nullopt;
    }
    IssueSink local;
    reject_unknown_keys(obj,
                        path,
                        {"id", "prompt", "center", "extents", "scale_factor", "yaw_degrees",
                         "opacity_gain", "learnable"},
                        local);
    InstanceLayout layout;
    if (auto id = get_string(obj, "id", path, local, true)) {
        if (id->empty()) {
            local.add(join_path(path, "id"), "must not be empty");
        }
        layout.id = *id;
    }
    if (auto prompt = get_string(obj, "prompt", path, local, true)) {
        layout.prompt = *prompt;
    }
    if (auto c = get_vec3(obj, "center", path, local, true)) {
        layout.center = *c;
    }
    if (auto e = get_vec3(obj, "extents", path, local, true, true)) {
        layout.extents = *e;
    }
    if (auto k = get_number(obj, "scale_factor", path, local, false)) {
        if (*k <= 0.0) {
            local.add(join_path(path, "scale_factor"), "must be > 0");
        }
        layout.scale_factor = *k;
    }
    if (auto yaw = get_number(obj, "yaw_degrees", path, local, false)) {
        layout.yaw = wrap_angle(degrees_to_radians(*yaw));
    }
    if (auto gain = get_number(obj, "opacity_gain", path, local, false)) {
        if (!(*gain > 0.0 && *gain <= 1.0)) {
            local.add(join_path(path, "opacity_gain"), "must lie in (0, 1]");
        }
        layout.opacity_gain = *gain;
    }
    if (const auto it = obj.find("learnable"); it != obj.end()) {
        const std::string lp = join_path(path, "learnable");
        if (!it->is_object()) {
            local.add(lp, "must be an object");
        } else {
            reject_unknown_keys(*it, lp, {"center", "scale", "yaw", "opacity"}, local);
            layout.learnable.center = get_bool(*it, "center", lp, local).value_or(false);
            layout.learnable.scale_factor = get_bool(*it, "scale", lp, local).value_or(false);
            layout.learnable.yaw = get_bool(*it, "yaw", lp, local).value_or(false);
            layout.learnable.opacity = get_bool(*it, "opacity", lp, local).value_or(false);
        }
    }
    const bool ok = local.empty();
    for (auto &issue : local.take()) {
        issues.add("", std::move(issue));
    }
    return ok ? std::optional<InstanceLayout>(std::move(layout)) : std::nullopt;
}

Json parse_json(std::string_view text, const std::string &what) {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error &e) {
        throw ValidationError(what + " is not valid JSON: " + e.what());
    }
}

} // namespace layoutsplat::detail
