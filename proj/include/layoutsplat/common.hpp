// Copyright 2026 The layoutsplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

namespace layoutsplat {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
/// Quaternion storage, component order (w, x, y, z).
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

inline double degrees_to_radians(double deg) { return deg * (kPi / 180.0); }
inline double radians_to_degrees(double rad) { return rad * (180.0 / kPi); }

/// Maps any finite angle into [0, 2pi).
inline double wrap_angle(double rad) {
    double w = std::fmod(rad, kTwoPi);
    if (w < 0.0) {
        w += kTwoPi;
    }
    // fmod of a value just below a multiple of 2pi can round up to 2pi
    if (w >= kTwoPi) {
        w = 0.0;
    }
    return w;
}

/// Rotation about +z by `yaw` radians.
inline Mat3 rotation_z(double yaw) {
    const double c = std::cos(yaw);
    const double s = std::sin(yaw);
    Mat3 r;
    r << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
    return r;
}

/// d/dyaw of rotation_z(yaw).
inline Mat3 rotation_z_derivative(double yaw) {
    const double c = std::cos(yaw);
    const double s = std::sin(yaw);
    Mat3 r;
    r << -s, -c, 0.0, c, -s, 0.0, 0.0, 0.0, 0.0;
    return r;
}

/// Rotation matrix of a unit quaternion (w, x, y, z).
inline Mat3 quaternion_to_matrix(const Vec4 &q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
        2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
        2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
    return r;
}

/// Flat view over a vector of fixed-size Eigen vectors.
template <typename V>
std::span<double> flat(std::vector<V> &v) {
    static_assert(sizeof(V) == sizeof(double) * V::SizeAtCompileTime);
    return {v.empty() ? nullptr : v.data()->data(), v.size() * V::SizeAtCompileTime};
}

template <typename V>
std::span<const double> flat(const std::vector<V> &v) {
    static_assert(sizeof(V) == sizeof(double) * V::SizeAtCompileTime);
    return {v.empty() ? nullptr : v.data()->data(), v.size() * V::SizeAtCompileTime};
}

inline std::span<double> flat(std::vector<double> &v) { return v; }
inline std::span<const double> flat(const std::vector<double> &v) { return v; }

/// Row-major H x W x 3 image of linear values.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> pixels;

    Image() = default;
    Image(int w, int h, double fill = 0.0)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill) {}

    std::size_t index(int x, int y, int c) const {
        return (static_cast<std::size_t>(y) * width + x) * 3 + c;
    }
    double &at(int x, int y, int c) { return pixels[index(x, y, c)]; }
    double at(int x, int y, int c) const { return pixels[index(x, y, c)]; }
    bool same_shape(const Image &o) const { return width == o.width && height == o.height; }
};

} // namespace layoutsplat
