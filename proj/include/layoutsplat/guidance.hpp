// Copyright 2026 The layoutsplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "layoutsplat/common.hpp"
#include "layoutsplat/scene.hpp"

#include <compare>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>

namespace layoutsplat {

/// Identifies a guidance view: `scope` is "scene" or an instance id, `index`
/// the azimuth slot on that scope's camera ring.
struct ViewKey {
    std::string scope;
    int index = 0;

    auto operator<=>(const ViewKey &) const = default;
};

inline const std::string kSceneScope = "scene";

struct GuidanceRequest {
    const Image *image = nullptr;
    Camera camera;
    ViewKey view;
    std::string prompt;
    /// Layout render for scene-level requests.
    const Image *condition = nullptr;
    /// Diffusion timestep, normalized to [0, 1].
    double timestep = 0.0;
    double guidance_scale = 1.0;

    void validate() const;
};

/// Image-space gradient stand-in: residual plays the role of (eps_hat - eps).
struct GuidanceResidual {
    Image residual;
    double weight = 1.0;
};

enum class WeightSchedule {
    /// w(eta) = 1
    Constant,
    /// w(eta) = eta^2
    EtaSquared,
};

/// Virtual camera placement shared by instance and scene guidance.
struct CameraRig {
    int width = 128;
    int height = 128;
    double fov_y_degrees = 70.0;
    double elevation_degrees = 15.0;
    /// Multiplies the instance radius (3/4 of the box diagonal).
    double instance_radius_scale = 1.0;
    /// Multiplies the scene radius (bounding-sphere radius of all boxes).
    double scene_radius_scale = 1.0;

    void validate() const;
};

struct GuidanceConfig {
    double instance_guidance_scale = 50.0;
    double scene_guidance_scale = 100.0;
    double eta_start = 0.98;
    double eta_end = 0.02;
    WeightSchedule weighting = WeightSchedule::Constant;
    /// Azimuth slots per ring; requests index into these.
    int instance_views = 8;
    int scene_views = 8;
    CameraRig rig;

    void validate() const;
};

/// Stand-in for a diffusion prior. Implementations must tolerate concurrent
/// calls with distinct requests.
class GuidanceProvider {
  public:
    virtual ~GuidanceProvider() = default;
    virtual GuidanceResidual provide(const GuidanceRequest &req, const GuidanceConfig &cfg) const = 0;
    virtual std::string kind() const = 0;
    /// Whether an instance may be relabeled to `prompt` without losing assets.
    virtual bool supports_prompt(const std::string &prompt) const {
        (void)prompt;
        return true;
    }
};

/// Residual against stored target renders: I - target(view).
class PhotometricTarget final : public GuidanceProvider {
  public:
    void add_target(ViewKey view, Image target, std::string prompt = {});
    bool has_target(const ViewKey &view) const { return targets_.contains(view); }
    std::size_t target_count() const { return targets_.size(); }
    const std::map<ViewKey, Image> &targets() const { return targets_; }

    GuidanceResidual provide(const GuidanceRequest &req, const GuidanceConfig &cfg) const override;
    std::string kind() const override { return "photometric"; }
    bool supports_prompt(const std::string &prompt) const override;

  private:
    std::map<ViewKey, Image> targets_;
    std::set<std::string> prompts_;
};

/// Residual against a constant color: I - c0.
class FlatColor final : public GuidanceProvider {
  public:
    explicit FlatColor(Vec3 color) : color_(std::move(color)) {}
    GuidanceResidual provide(const GuidanceRequest &req, const GuidanceConfig &cfg) const override;
    std::string kind() const override { return "flat"; }

  private:
    Vec3 color_;
};

/// Residual against a screen-space checkerboard whose phase follows the
/// camera azimuth, so the pattern appears to rotate with the view.
class CheckerTexture final : public GuidanceProvider {
  public:
    CheckerTexture(int cells, Vec3 color_a, Vec3 color_b)
        : cells_(cells), a_(std::move(color_a)), b_(std::move(color_b)) {}
    GuidanceResidual provide(const GuidanceRequest &req, const GuidanceConfig &cfg) const override;
    std::string kind() const override { return "checker"; }
    Image pattern(const Camera &cam) const;

  private:
    int cells_;
    Vec3 a_;
    Vec3 b_;
};

/// Linearly decayed timestep: eta_start at step 0, eta_end at step total-1.
double timestep_at(std::uint64_t step, std::uint64_t total_steps, const GuidanceConfig &cfg);
double guidance_weight(double eta, WeightSchedule schedule);

/// Camera on a ring around `target`; azimuth measured from +x toward +y.
Camera orbit_camera(const Vec3 &target, double radius, double azimuth_radians,
                    double elevation_radians, const CameraRig &rig);

double instance_camera_radius(const InstanceLayout &layout);
/// Slot k of n on the instance ring (radius 3/4 of the box diagonal).
Camera sample_instance_camera(const InstanceLayout &layout, int k, int n, const CameraRig &rig);

struct SceneBounds {
    Vec3 center = Vec3::Zero();
    double radius = 0.0;
};
/// Sphere around the AABB center of all box corners, reaching the farthest corner.
SceneBounds scene_bounds(std::span<const InstanceLayout> layouts);
/// Slot k of n on the scene ring. Throws NumericalError for zero-extent bounds.
Camera sample_scene_camera(const SceneBounds &bounds, int k, int n, const CameraRig &rig);

/// Index color used for instance i in condition renders.
Vec3 layout_color(std::size_t index);

/// Filled layout boxes in per-instance colors, nearer box centers painted
/// over farther ones; black where no box is hit.
Image render_layout_condition(std::span<const InstanceLayout> layouts, const Camera &cam);

} // namespace layoutsplat
