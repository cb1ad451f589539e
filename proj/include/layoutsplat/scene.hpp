// Copyright 2026 The layoutsplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "layoutsplat/common.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace layoutsplat {

/// Which pose parameters layout refinement may change.
struct LearnableFlags {
    bool center = false;
    bool scale_factor = false;
    bool yaw = false;
    /// Per-instance opacity multiplier; off unless requested.
    bool opacity = false;

    bool any() const { return center || scale_factor || yaw || opacity; }
    bool operator==(const LearnableFlags &) const = default;
};

/// One oriented layout box and the prompt of the object it holds.
///
/// The layout-local frame is centered on the box, un-yawed and un-scaled, so
/// the box occupies [-extents/2, extents/2] there. A local point p maps to the
/// world as scale_factor * Rz(yaw) * p + center.
struct InstanceLayout {
    std::string id;
    std::string prompt;
    Vec3 center = Vec3::Zero();
    /// (h, w, l) paired with the local (x, y, z) axes.
    Vec3 extents = Vec3::Ones();
    double scale_factor = 1.0;
    /// Radians about world +z, kept in [0, 2pi).
    double yaw = 0.0;
    /// Multiplies every Gaussian opacity of this instance; in (0, 1].
    double opacity_gain = 1.0;
    LearnableFlags learnable;

    Vec3 half_extents() const { return 0.5 * extents; }
    /// Throws ValidationError listing every broken invariant.
    void validate() const;

    bool operator==(const InstanceLayout &) const = default;
};

/// Per-instance Gaussian parameters in the layout-local frame, stored raw.
///
/// Activations: scale = exp(scales_raw), opacity = sigmoid(opacity_raw),
/// color = sigmoid(colors_raw). Rotations are quaternions (w, x, y, z); the
/// renderer normalizes them, the optimizer renormalizes after each update.
struct InstanceGaussians {
    std::vector<Vec3> positions;
    std::vector<Vec4> rotations;
    std::vector<Vec3> scales_raw;
    std::vector<double> opacity_raw;
    std::vector<Vec3> colors_raw;

    std::size_t size() const { return positions.size(); }
    void resize(std::size_t m);
    /// Throws ValidationError when the arrays disagree in length.
    void check_consistent() const;

    bool operator==(const InstanceGaussians &) const = default;
};

struct Instance {
    InstanceLayout layout;
    InstanceGaussians gaussians;

    bool operator==(const Instance &) const = default;
};

/// Immutable world-frame Gaussian set handed to the renderer and observers.
struct SceneSnapshot {
    std::vector<Vec3> positions;
    std::vector<Mat3> covariances;
    std::vector<double> opacities;
    std::vector<Vec3> colors;
    /// Index into owner_ids for every Gaussian.
    std::vector<std::uint32_t> owner;
    /// Index of the Gaussian inside its owner's arrays.
    std::vector<std::uint32_t> local_index;
    std::vector<std::string> owner_ids;

    std::size_t size() const { return positions.size(); }
    bool empty() const { return positions.empty(); }
};

/// Pinhole camera, OpenCV axes (x right, y down, z forward).
struct Camera {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.5;
    double cy = 0.5;
    int width = 1;
    int height = 1;
    /// World-to-camera rotation and translation: x_cam = rotation * x + translation.
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    void validate() const;
    Vec3 to_camera(const Vec3 &world) const { return rotation * world + translation; }
    Vec3 position() const { return -rotation.transpose() * translation; }

    /// Camera at `eye` looking at `target` with world up +z.
    static Camera look_at(const Vec3 &eye, const Vec3 &target, double fov_y_radians, int width,
                          int height);

    bool operator==(const Camera &) const = default;
};

Vec3 compose_position(const Vec3 &local, const InstanceLayout &layout);
Vec3 decompose_position(const Vec3 &world, const InstanceLayout &layout);
Mat3 compose_covariance(const Mat3 &local_cov, const InstanceLayout &layout);

/// Partial derivatives of compose_position.
struct PositionJacobian {
    Mat3 d_local;
    Mat3 d_center;
    Vec3 d_scale_factor;
    Vec3 d_yaw;
};
PositionJacobian compose_position_jacobian(const Vec3 &local, const InstanceLayout &layout);

/// R S S^T R^T for a unit quaternion; rejects quaternions whose norm is off by more than 1e-4.
Mat3 build_covariance(const Vec4 &rotation, const Vec3 &scales);

/// Local covariance of Gaussian j, normalizing its stored quaternion.
Mat3 local_covariance(const InstanceGaussians &g, std::size_t j);

/// Flattens all instances into world space. Throws EmptySceneError for no instances.
SceneSnapshot assemble_scene(std::span<const Instance> instances);

/// Gradient of a scalar objective with respect to snapshot entries.
/// `covariances` holds the symmetric matrix G with dL = <G, dSigma>.
struct WorldGradients {
    std::vector<Vec3> positions;
    std::vector<Mat3> covariances;
    std::vector<double> opacities;
    std::vector<Vec3> colors;

    void resize(std::size_t n);
    std::size_t size() const { return positions.size(); }
};

struct LayoutGradients {
    Vec3 center = Vec3::Zero();
    double scale_factor = 0.0;
    double yaw = 0.0;
    double opacity_gain = 0.0;
};

/// Gradient with respect to every raw parameter of one instance.
struct InstanceGradients {
    std::vector<Vec3> positions;
    std::vector<Vec4> rotations;
    std::vector<Vec3> scales;
    std::vector<double> opacity;
    std::vector<Vec3> colors;
    LayoutGradients layout;

    explicit InstanceGradients(std::size_t m = 0);
    void add(const InstanceGradients &other, double weight);
    void add_gaussians(const InstanceGradients &other, double weight);
    void add_layout(const LayoutGradients &other, double weight);
    bool all_finite() const;
};

/// Chains snapshot gradients through the instance-to-world transforms down to
/// raw Gaussian parameters and layout pose parameters. `instances` must be
/// the list the snapshot was assembled from.
std::vector<InstanceGradients> backprop_to_instances(std::span<const Instance> instances,
                                                     const WorldGradients &world);

} // namespace layoutsplat
