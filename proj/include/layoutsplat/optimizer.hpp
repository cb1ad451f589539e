// Copyright 2026 The layoutsplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "layoutsplat/geometry_control.hpp"
#include "layoutsplat/guidance.hpp"
#include "layoutsplat/losses.hpp"
#include "layoutsplat/rasterizer.hpp"
#include "layoutsplat/scene.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace layoutsplat {

struct LearningRates {
    double position = 1.6e-4;
    double opacity = 5e-2;
    double color = 5e-3;
    double scale = 5e-3;
    double rotation = 1e-3;
    double layout_center = 5e-3;
    double layout_scale = 5e-3;
    double layout_yaw = 5e-3;
    double layout_opacity = 1e-2;
};

struct OptimizerConfig {
    std::uint64_t steps = 1000;
    LearningRates lr;
    LossWeights weights;
    int instance_cameras_per_step = 4;
    int scene_cameras_per_step = 4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double min_scale_factor = 0.1;
    double max_scale_factor = 10.0;

    void validate() const;
};

/// First and second moments for one parameter group.
struct AdamMoments {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t t = 0;

    bool operator==(const AdamMoments &) const = default;
};

struct InstanceMoments {
    AdamMoments position, rotation, scale, opacity, color;
    AdamMoments center, scale_factor, yaw, opacity_gain;

    bool operator==(const InstanceMoments &) const = default;
};

/// Everything the optimizer mutates. `moments[i]` belongs to `instances[i]`.
struct SceneState {
    std::string scene_prompt;
    std::vector<Instance> instances;
    std::vector<InstanceMoments> moments;
    /// Number of completed optimizer steps.
    std::uint64_t step = 0;
    std::uint64_t seed = 0;

    std::vector<InstanceLayout> layouts() const;
    /// Position of `id`; throws NotFoundError.
    std::size_t index_of(const std::string &id) const;
    bool contains(const std::string &id) const;

    bool operator==(const SceneState &) const = default;
};

/// Samples every instance with geometry control. Throws ValidationError on bad layouts.
SceneState init_scene(std::string scene_prompt, const std::vector<InstanceLayout> &layouts,
                      const SurfaceSamplingConfig &sampling, std::uint64_t seed);
void add_instance(SceneState &state, InstanceLayout layout, const SurfaceSamplingConfig &sampling);
void remove_instance(SceneState &state, const std::string &id);

/// Guidance and rendering setup shared by every step.
struct StepContext {
    std::shared_ptr<const GuidanceProvider> instance_provider;
    std::shared_ptr<const GuidanceProvider> scene_provider;
    GuidanceConfig guidance;
    RasterConfig raster;
    Vec3 background = Vec3::Zero();
    /// Cameras pinned per view; other views follow the current layouts.
    /// Photometric targets pin theirs so refinement cannot move the viewpoint.
    std::map<ViewKey, Camera> fixed_cameras;
};

struct StepOptions {
    /// Per-instance update mask; empty means every instance is active.
    std::vector<bool> active;
    bool update_gaussians = true;
    bool update_layouts = true;
};

/// Azimuth slots drawn for one scope at one step: a random phase plus an
/// even stride over the ring.
std::vector<int> select_views(std::uint64_t seed, std::uint64_t step, const std::string &scope,
                              int ring_size, int count);

/// Term values and the gradient for the current state, without updating it.
struct ObjectiveEvaluation {
    LossReport report;
    std::vector<InstanceGradients> gradients;
};
ObjectiveEvaluation evaluate_objective(const SceneState &state, const OptimizerConfig &cfg,
                                       const StepContext &ctx, double eta,
                                       const StepOptions &opts = {});

/// One compositional optimization step at timestep `eta`; increments state.step.
/// Throws DivergenceError, leaving `state` untouched, if any gradient is not finite.
LossReport step(SceneState &state, const OptimizerConfig &cfg, const StepContext &ctx, double eta,
                const StepOptions &opts = {});

/// One update of learnable layout poses from scene-level guidance only.
LossReport refine_layouts(SceneState &state, const OptimizerConfig &cfg, const StepContext &ctx,
                          double eta);

struct LayoutPose {
    Vec3 center;
    double scale_factor;
    double yaw;
};

struct TraceRow {
    std::uint64_t step = 0;
    LossReport report;
    std::vector<LayoutPose> poses;
    double seconds = 0.0;
};

struct OptimizationTrace {
    std::vector<std::string> instance_ids;
    std::vector<TraceRow> rows;

    /// step, eta, total, global, reg, per-instance terms, per-instance pose.
    std::string to_csv() const;
};

struct RunOptions {
    /// Execute at most this many steps in this call.
    std::optional<std::uint64_t> stop_after;
    /// Invoke on_step every `callback_every` completed steps (0 = never).
    std::uint64_t callback_every = 0;
    std::function<void(const SceneState &, const LossReport &)> on_step;
};

/// Steps from state.step up to cfg.steps with linearly decaying timestep.
OptimizationTrace run(SceneState &state, const OptimizerConfig &cfg, const StepContext &ctx,
                      const RunOptions &opts = {});

/// Optimizes only the listed instances for `steps` steps; everything else is
/// rendered for context but left bit-identical.
OptimizationTrace local_reoptimize(SceneState &state, const std::vector<std::string> &edited_ids,
                                   const OptimizerConfig &cfg, const StepContext &ctx,
                                   std::uint64_t steps);

} // namespace layoutsplat
