// Copyright 2026 The layoutsplat Authors
// SPDX-License-Identifier: Apache-2.0

#include "layoutsplat/guidance.hpp"

#include "layoutsplat/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace layoutsplat {

void GuidanceRequest::validate() const {
    if (image == nullptr) {
        throw ValidationError("guidance request has no image");
    }
    if (!(timestep >= 0.0 && timestep <= 1.0)) {
        throw ValidationError("guidance timestep must lie in [0, 1]");
    }
    if (condition != nullptr && !condition->same_shape(*image)) {
        throw ValidationError("guidance condition shape does not match the image");
    }
}

void CameraRig::validate() const {
    std::vector<std::string> issues;
    if (width < 1 || height < 1) {
        issues.emplace_back("render resolution must be at least 1x1");
    }
    if (!(fov_y_degrees > 0.0 && fov_y_degrees < 180.0)) {
        issues.emplace_back("fov_y_degrees must lie in (0, 180)");
    }
    if (!(elevation_degrees > -90.0 && elevation_degrees < 90.0)) {
        issues.emplace_back("elevation_degrees must lie in (-90, 90)");
    }
    if (!(instance_radius_scale > 0.0) || !(scene_radius_scale > 0.0)) {
        issues.emplace_back("camera radius scales must be > 0");
    }
    if (!issues.empty()) {
        throw ValidationError(std::move(issues));
    }
}

void GuidanceConfig::validate() const {
    std::vector<std::string> issues;
    if (!(instance_guidance_scale > 0.0) || !(scene_guidance_scale > 0.0)) {
        issues.emplace_back("guidance scales must be > 0");
    }
    if (!(eta_start >= 0.0 && eta_start <= 1.0 && eta_end >= 0.0 && eta_end <= 1.0)) {
        issues.emplace_back("timestep endpoints must lie in [0, 1]");
    }
    if (instance_views < 1 || scene_views < 1) {
        issues.emplace_back("view counts must be >= 1");
    }
    if (!issues.empty()) {
        throw ValidationError(std::move(issues));
    }
    rig.validate();
}

namespace {

GuidanceResidual subtract(const GuidanceRequest &req, const GuidanceConfig &cfg,
                          const auto &target_at) {
    req.validate();
    GuidanceResidual out;
    out.residual = Image(req.image->width, req.image->height);
    for (int y = 0; y < req.image->height; ++y) {
        for (int x = 0; x < req.image->width; ++x) {
            for (int c = 0; c < 3; ++c) {
                out.residual.at(x, y, c) = req.image->at(x, y, c) - target_at(x, y, c);
            }
        }
    }
    out.weight = guidance_weight(req.timestep, cfg.weighting);
    return out;
}

} // namespace

void PhotometricTarget::add_target(ViewKey view, Image target, std::string prompt) {
    if (!prompt.empty()) {
        prompts_.insert(std::move(prompt));
    }
    targets_.insert_or_assign(std::move(view), std::move(target));
}

GuidanceResidual PhotometricTarget::provide(const GuidanceRequest &req,
                                            const GuidanceConfig &cfg) const {
    const auto it = targets_.find(req.view);
    if (it == targets_.end()) {
        throw MissingAssetError("no photometric target for view " + req.view.scope + "#" +
                                std::to_string(req.view.index));
    }
    const Image &target = it->second;
    if (req.image == nullptr || !target.same_shape(*req.image)) {
        throw ValidationError("photometric target shape does not match the rendered view");
    }
    return subtract(req, cfg, [&](int x, int y, int c) { return target.at(x, y, c); });
}

bool PhotometricTarget::supports_prompt(const std::string &prompt) const {
    return prompts_.contains(prompt);
}

GuidanceResidual FlatColor::provide(const GuidanceRequest &req, const GuidanceConfig &cfg) const {
    return subtract(req, cfg, [&](int, int, int c) { return color_[c]; });
}

Image CheckerTexture::pattern(const Camera &cam) const {
    const Vec3 eye = cam.position();
    const double azimuth = std::atan2(eye.y(), eye.x());
    const double cell = static_cast<double>(cam.width) / std::max(1, cells_);
    const double shift = wrap_angle(azimuth) / kTwoPi * cam.width;
    Image img(cam.width, cam.height);
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            const long cx = static_cast<long>(std::floor((x + 0.5 + shift) / cell));
            const long cy = static_cast<long>(std::floor((y + 0.5) / cell));
            const Vec3 &col = ((cx + cy) % 2 == 0) ? a_ : b_;
            for (int c = 0; c < 3; ++c) {
                img.at(x, y, c) = col[c];
            }
        }
    }
    return img;
}

GuidanceResidual CheckerTexture::provide(const GuidanceRequest &req,
                                         const GuidanceConfig &cfg) const {
    const Image target = pattern(req.camera);
    if (req.image == nullptr || !target.same_shape(*req.image)) {
        throw ValidationError("checker target shape does not match the rendered view");
    }
    return subtract(req, cfg, [&](int x, int y, int c) { return target.at(x, y, c); });
}

double timestep_at(std::uint64_t step, std::uint64_t total_steps, const GuidanceConfig &cfg) {
    if (total_steps <= 1) {
        return cfg.eta_start;
    }
    const double frac = static_cast<double>(std::min(step, total_steps - 1)) /
                        static_cast<double>(total_steps - 1);
    return std::lerp(cfg.eta_start, cfg.eta_end, frac);
}

double guidance_weight(double eta, WeightSchedule schedule) {
    switch (schedule) {
    case WeightSchedule::Constant:
        return 1.0;
    case WeightSchedule::EtaSquared:
        return eta * eta;
    }
    return 1.0;
}

Camera orbit_camera(const Vec3 &target, double radius, double azimuth_radians,
                    double elevation_radians, const CameraRig &rig) {
    const double ce = std::cos(elevation_radians);
    const Vec3 offset(ce * std::cos(azimuth_radians), ce * std::sin(azimuth_radians),
                      std::sin(elevation_radians));
    return Camera::look_at(target + radius * offset, target, degrees_to_radians(rig.fov_y_degrees),
                           rig.width, rig.height);
}

double instance_camera_radius(const InstanceLayout &layout) {
    return 0.75 * (layout.scale_factor * layout.extents).norm();
}

Camera sample_instance_camera(const InstanceLayout &layout, int k, int n, const CameraRig &rig) {
    if (n < 1) {
        throw ValidationError("camera ring needs at least one slot");
    }
    const double azimuth = kTwoPi * static_cast<double>(k) / static_cast<double>(n);
    return orbit_camera(layout.center, rig.instance_radius_scale * instance_camera_radius(layout),
                        azimuth, degrees_to_radians(rig.elevation_degrees), rig);
}

SceneBounds scene_bounds(std::span<const InstanceLayout> layouts) {
    SceneBounds b;
    if (layouts.empty()) {
        return b;
    }
    std::vector<Vec3> corners;
    corners.reserve(layouts.size() * 8);
    for (const auto &layout : layouts) {
        const Vec3 half = layout.half_extents();
        for (int c = 0; c < 8; ++c) {
            const Vec3 local((c & 1) ? half.x() : -half.x(), (c & 2) ? half.y() : -half.y(),
                             (c & 4) ? half.z() : -half.z());
            corners.push_back(compose_position(local, layout));
        }
    }
    Vec3 lo = corners.front();
    Vec3 hi = corners.front();
    for (const auto &c : corners) {
        lo = lo.cwiseMin(c);
        hi = hi.cwiseMax(c);
    }
    b.center = 0.5 * (lo + hi);
    for (const auto &c : corners) {
        b.radius = std::max(b.radius, (c - b.center).norm());
    }
    return b;
}

Camera sample_scene_camera(const SceneBounds &bounds, int k, int n, const CameraRig &rig) {
    if (!(bounds.radius > 0.0) || !std::isfinite(bounds.radius)) {
        throw NumericalError("scene bounds are degenerate");
    }
    if (n < 1) {
        throw ValidationError("camera ring needs at least one slot");
    }
    const double azimuth = kTwoPi * static_cast<double>(k) / static_cast<double>(n);
    return orbit_camera(bounds.center, rig.scene_radius_scale * bounds.radius, azimuth,
                        degrees_to_radians(rig.elevation_degrees), rig);
}

Vec3 layout_color(std::size_t index) {
    // Golden-ratio hue walk, fixed saturation/value; never black.
    const double hue = std::fmod(0.1 + 0.6180339887498949 * static_cast<double>(index), 1.0);
    const double s = 0.7, v = 0.95;
    const double h6 = hue * 6.0;
    const int sector = static_cast<int>(h6) % 6;
    const double f = h6 - std::floor(h6);
    const double p = v * (1.0 - s), q = v * (1.0 - s * f), t = v * (1.0 - s * (1.0 - f));
    switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
    }
}

Image render_layout_condition(std::span<const InstanceLayout> layouts, const Camera &cam) {
    cam.validate();
    Image img(cam.width, cam.height, 0.0);
    if (layouts.empty()) {
        return img;
    }

    // Paint order: farther box centers first, later entries win ties.
    std::vector<std::size_t> order(layouts.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    std::vector<double> depth(layouts.size());
    for (std::size_t i = 0; i < layouts.size(); ++i) {
        depth[i] = cam.to_camera(layouts[i].center).z();
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return depth[a] > depth[b]; });

    const Vec3 origin = cam.position();
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            const Vec3 dir_cam((x + 0.5 - cam.cx) / cam.fx, (y + 0.5 - cam.cy) / cam.fy, 1.0);
            const Vec3 dir = cam.rotation.transpose() * dir_cam;
            std::optional<std::size_t> painted;
            for (const std::size_t i : order) {
                const auto &layout = layouts[i];
                const Mat3 rz_t = rotation_z(layout.yaw).transpose();
                const Vec3 o = rz_t * (origin - layout.center) / layout.scale_factor;
                const Vec3 d = rz_t * dir / layout.scale_factor;
                const Vec3 half = layout.half_extents();
                double t_near = -std::numeric_limits<double>::infinity();
                double t_far = std::numeric_limits<double>::infinity();
                bool miss = false;
                for (int a = 0; a < 3 && !miss; ++a) {
                    if (std::abs(d[a]) < 1e-300) {
                        miss = std::abs(o[a]) > half[a];
                        continue;
                    }
                    double t0 = (-half[a] - o[a]) / d[a];
                    double t1 = (half[a] - o[a]) / d[a];
                    if (t0 > t1) {
                        std::swap(t0, t1);
                    }
                    t_near = std::max(t_near, t0);
                    t_far = std::min(t_far, t1);
                    miss = t_near > t_far;
                }
                if (!miss && t_far > 0.0) {
                    painted = i;
                }
            }
            if (painted) {
                const Vec3 col = layout_color(*painted);
                for (int c = 0; c < 3; ++c) {
                    img.at(x, y, c) = col[c];
                }
            }
        }
    }
    return img;
}

} // namespace layoutsplat
