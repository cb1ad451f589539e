// Copyright 2026 The layoutsplat Authors
// SPDX-License-Identifier: Apache-2.0

#include "layoutsplat/scene.hpp"

#include "layoutsplat/errors.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <string>

namespace layoutsplat {

void InstanceLayout::validate() const {
    std::vector<std::string> issues;
    const std::string who = "instance '" + id + "'";
    if (id.empty()) {
        issues.push_back("instance id must not be empty");
    }
    if (!center.allFinite()) {
        issues.push_back(who + ": center must be finite");
    }
    for (int a = 0; a < 3; ++a) {
        if (!std::isfinite(extents[a]) || extents[a] <= 0.0) {
            issues.push_back(who + ": extents[" + std::to_string(a) + "] must be finite and > 0");
        }
    }
    if (!std::isfinite(scale_factor) || scale_factor <= 0.0) {
        issues.push_back(who + ": scale_factor must be finite and > 0");
    }
    if (!std::isfinite(yaw) || yaw < 0.0 || yaw >= kTwoPi) {
        issues.push_back(who + ": yaw must lie in [0, 2pi)");
    }
    if (!std::isfinite(opacity_gain) || opacity_gain <= 0.0 || opacity_gain > 1.0) {
        issues.push_back(who + ": opacity_gain must lie in (0, 1]");
    }
    if (!issues.empty()) {
        throw ValidationError(std::move(issues));
    }
}

void InstanceGaussians::resize(std::size_t m) {
    positions.resize(m, Vec3::Zero());
    rotations.resize(m, Vec4(1.0, 0.0, 0.0, 0.0));
    scales_raw.resize(m, Vec3::Zero());
    opacity_raw.resize(m, 0.0);
    colors_raw.resize(m, Vec3::Zero());
}

void InstanceGaussians::check_consistent() const {
    const std::size_t m = positions.size();
    if (rotations.size() != m || scales_raw.size() != m || opacity_raw.size() != m ||
        colors_raw.size() != m) {
        throw ValidationError("Gaussian parameter arrays have mismatched lengths");
    }
}

void Camera::validate() const {
    std::vector<std::string> issues;
    if (!(fx > 0.0) || !(fy > 0.0)) {
        issues.emplace_back("camera focal lengths must be > 0");
    }
    if (width < 1 || height < 1) {
        issues.emplace_back("camera resolution must be at least 1x1");
    }
    if (!((rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() <= 1e-6) ||
        !(std::abs(rotation.determinant() - 1.0) <= 1e-6)) {
        issues.emplace_back("camera rotation must be orthonormal");
    }
    if (!translation.allFinite()) {
        issues.emplace_back("camera translation must be finite");
    }
    if (!issues.empty()) {
        throw ValidationError(std::move(issues));
    }
}

Camera Camera::look_at(const Vec3 &eye, const Vec3 &target, double fov_y_radians, int width,
                       int height) {
    const Vec3 forward = (target - eye).normalized();
    Vec3 right = forward.cross(Vec3::UnitZ());
    if (right.norm() < 1e-12) {
        // Looking straight up or down; any horizontal right vector works.
        right = Vec3::UnitX();
    }
    right.normalize();
    const Vec3 down = forward.cross(right);

    Camera cam;
    cam.rotation.row(0) = right.transpose();
    cam.rotation.row(1) = down.transpose();
    cam.rotation.row(2) = forward.transpose();
    cam.translation = -cam.rotation * eye;
    cam.width = width;
    cam.height = height;
    cam.fy = 0.5 * height / std::tan(0.5 * fov_y_radians);
    cam.fx = cam.fy;
    cam.cx = 0.5 * width;
    cam.cy = 0.5 * height;
    return cam;
}

Vec3 compose_position(const Vec3 &local, const InstanceLayout &layout) {
    return layout.scale_factor * (rotation_z(layout.yaw) * local) + layout.center;
}

Vec3 decompose_position(const Vec3 &world, const InstanceLayout &layout) {
    return rotation_z(layout.yaw).transpose() * (world - layout.center) / layout.scale_factor;
}

Mat3 compose_covariance(const Mat3 &local_cov, const InstanceLayout &layout) {
    const Mat3 rz = rotation_z(layout.yaw);
    const double k2 = layout.scale_factor * layout.scale_factor;
    return k2 * (rz * local_cov * rz.transpose());
}

PositionJacobian compose_position_jacobian(const Vec3 &local, const InstanceLayout &layout) {
    const Mat3 rz = rotation_z(layout.yaw);
    PositionJacobian j;
    j.d_local = layout.scale_factor * rz;
    j.d_center = Mat3::Identity();
    j.d_scale_factor = rz * local;
    j.d_yaw = layout.scale_factor * (rotation_z_derivative(layout.yaw) * local);
    return j;
}

Mat3 build_covariance(const Vec4 &rotation, const Vec3 &scales) {
    if (std::abs(rotation.norm() - 1.0) > 1e-4) {
        throw ValidationError("build_covariance: quaternion is not unit length");
    }
    const Mat3 r = quaternion_to_matrix(rotation);
    const Mat3 m = r * scales.asDiagonal();
    return m * m.transpose();
}

Mat3 local_covariance(const InstanceGaussians &g, std::size_t j) {
    return build_covariance(g.rotations[j].normalized(), g.scales_raw[j].array().exp().matrix());
}

SceneSnapshot assemble_scene(std::span<const Instance> instances) {
    if (instances.empty()) {
        throw EmptySceneError("cannot assemble a scene with no instances");
    }
    std::size_t total = 0;
    for (const auto &inst : instances) {
        inst.gaussians.check_consistent();
        total += inst.gaussians.size();
    }

    SceneSnapshot snap;
    snap.positions.reserve(total);
    snap.covariances.reserve(total);
    snap.opacities.reserve(total);
    snap.colors.reserve(total);
    snap.owner.reserve(total);
    snap.local_index.reserve(total);
    snap.owner_ids.reserve(instances.size());

    for (std::size_t i = 0; i < instances.size(); ++i) {
        const auto &layout = instances[i].layout;
        const auto &g = instances[i].gaussians;
        snap.owner_ids.push_back(layout.id);
        const Mat3 rz = rotation_z(layout.yaw);
        const double k = layout.scale_factor;
        for (std::size_t j = 0; j < g.size(); ++j) {
            snap.positions.push_back(k * (rz * g.positions[j]) + layout.center);
            snap.covariances.push_back(k * k * (rz * local_covariance(g, j) * rz.transpose()));
            snap.opacities.push_back(layout.opacity_gain * sigmoid(g.opacity_raw[j]));
            snap.colors.push_back(g.colors_raw[j].unaryExpr([](double v) { return sigmoid(v); }));
            snap.owner.push_back(static_cast<std::uint32_t>(i));
            snap.local_index.push_back(static_cast<std::uint32_t>(j));
        }
    }
    return snap;
}

void WorldGradients::resize(std::size_t n) {
    positions.assign(n, Vec3::Zero());
    covariances.assign(n, Mat3::Zero());
    opacities.assign(n, 0.0);
    colors.assign(n, Vec3::Zero());
}

InstanceGradients::InstanceGradients(std::size_t m)
    : positions(m, Vec3::Zero()), rotations(m, Vec4::Zero()), scales(m, Vec3::Zero()),
      opacity(m, 0.0), colors(m, Vec3::Zero()) {}

void InstanceGradients::add_gaussians(const InstanceGradients &o, double w) {
    for (std::size_t j = 0; j < positions.size(); ++j) {
        positions[j] += w * o.positions[j];
        rotations[j] += w * o.rotations[j];
        scales[j] += w * o.scales[j];
        opacity[j] += w * o.opacity[j];
        colors[j] += w * o.colors[j];
    }
}

void InstanceGradients::add_layout(const LayoutGradients &o, double w) {
    layout.center += w * o.center;
    layout.scale_factor += w * o.scale_factor;
    layout.yaw += w * o.yaw;
    layout.opacity_gain += w * o.opacity_gain;
}

void InstanceGradients::add(const InstanceGradients &o, double w) {
    add_gaussians(o, w);
    add_layout(o.layout, w);
}

bool InstanceGradients::all_finite() const {
    auto finite = [](const auto &vec) {
        for (const auto &v : vec) {
            if constexpr (std::is_same_v<std::decay_t<decltype(v)>, double>) {
                if (!std::isfinite(v)) {
                    return false;
                }
            } else if (!v.allFinite()) {
                return false;
            }
        }
        return true;
    };
    return finite(positions) && finite(rotations) && finite(scales) && finite(opacity) &&
           finite(colors) && layout.center.allFinite() && std::isfinite(layout.scale_factor) &&
           std::isfinite(layout.yaw) && std::isfinite(layout.opacity_gain);
}

namespace {

/// dL/dq for R(q) with q unit, given G = dL/dR.
Vec4 quaternion_matrix_backward(const Vec4 &q, const Mat3 &g) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Vec4 out;
    out[0] = 2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) +
                    x * g(2, 1));
    out[1] = 2.0 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2) +
                    z * g(2, 0) + w * g(2, 1) - 2.0 * x * g(2, 2));
    out[2] = 2.0 * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) -
                    w * g(2, 0) + z * g(2, 1) - 2.0 * y * g(2, 2));
    out[3] = 2.0 * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) -
                    2.0 * z * g(1, 1) + y * g(1, 2) + x * g(2, 0) + y * g(2, 1));
    return out;
}

} // namespace

std::vector<InstanceGradients> backprop_to_instances(std::span<const Instance> instances,
                                                     const WorldGradients &world) {
    std::vector<InstanceGradients> out;
    out.reserve(instances.size());
    std::size_t offset = 0;
    for (const auto &inst : instances) {
        const auto &layout = inst.layout;
        const auto &g = inst.gaussians;
        InstanceGradients grad(g.size());

        const double k = layout.scale_factor;
        const Mat3 rz = rotation_z(layout.yaw);
        const Mat3 drz = rotation_z_derivative(layout.yaw);

        for (std::size_t j = 0; j < g.size(); ++j, ++offset) {
            const Vec3 &g_pos = world.positions[offset];
            const Mat3 &g_cov = world.covariances[offset];

            // world position = k Rz p + center
            const Vec3 &p = g.positions[j];
            grad.positions[j] = k * (rz.transpose() * g_pos);
            grad.layout.center += g_pos;
            grad.layout.scale_factor += g_pos.dot(rz * p);
            grad.layout.yaw += g_pos.dot(k * (drz * p));

            // world covariance = k^2 Rz Sigma Rz^T, Sigma = M M^T, M = R(q) diag(s)
            const double qn = g.rotations[j].norm();
            const Vec4 q = g.rotations[j] / qn;
            const Mat3 r = quaternion_to_matrix(q);
            const Vec3 s = g.scales_raw[j].array().exp().matrix();
            const Mat3 m = r * s.asDiagonal();
            const Mat3 sigma = m * m.transpose();

            const Mat3 rot_sigma = rz * sigma;
            grad.layout.scale_factor += 2.0 * k * (g_cov.cwiseProduct(rot_sigma * rz.transpose())).sum();
            grad.layout.yaw += 2.0 * k * k * (g_cov.cwiseProduct(drz * sigma * rz.transpose())).sum();

            const Mat3 g_sigma = k * k * (rz.transpose() * g_cov * rz);
            const Mat3 g_m = 2.0 * g_sigma * m;
            Vec3 g_s;
            Mat3 g_r;
            for (int c = 0; c < 3; ++c) {
                g_s[c] = g_m.col(c).dot(r.col(c));
                g_r.col(c) = g_m.col(c) * s[c];
            }
            grad.scales[j] = g_s.cwiseProduct(s);
            const Vec4 g_qhat = quaternion_matrix_backward(q, g_r);
            grad.rotations[j] = (g_qhat - q * q.dot(g_qhat)) / qn;

            const double a = sigmoid(g.opacity_raw[j]);
            const double g_alpha = world.opacities[offset];
            grad.opacity[j] = g_alpha * layout.opacity_gain * a * (1.0 - a);
            grad.layout.opacity_gain += g_alpha * a;

            for (int c = 0; c < 3; ++c) {
                const double col = sigmoid(g.colors_raw[j][c]);
                grad.colors[j][c] = world.colors[offset][c] * col * (1.0 - col);
            }
        }
        out.push_back(std::move(grad));
    }
    return out;
}

} // namespace layoutsplat
