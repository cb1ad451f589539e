// Copyright 2026 The layoutsplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "layoutsplat/geometry_control.hpp"
#include "layoutsplat/guidance.hpp"
#include "layoutsplat/optimizer.hpp"
#include "layoutsplat/rasterizer.hpp"
#include "layoutsplat/scene_io.hpp"

#include <filesystem>
#include <string>
#include <string_view>

namespace layoutsplat {

/// One guidance provider block of the run config.
struct ProviderSpec {
    /// "flat", "checker" or "photometric".
    std::string kind = "flat";
    Vec3 color = Vec3::Constant(0.5);
    int cells = 8;
    Vec3 color_a = Vec3::Zero();
    Vec3 color_b = Vec3::Ones();
    /// Photometric: directory of `<scope>_<index>.ppm` target views.
    std::filesystem::path targets_dir;
    /// Photometric: checkpoint of a reference scene to render targets from.
    std::filesystem::path reference_checkpoint;

    bool operator==(const ProviderSpec &) const = default;
};

/// Everything one generation run needs, in a single file that references
/// the layout document. Relative paths resolve against the config's folder.
struct RunConfig {
    std::filesystem::path layout_path;
    LayoutDocument layout;
    std::filesystem::path output_dir = "out";
    std::uint64_t seed = 0;
    SurfaceSamplingConfig sampling{.mu = 1.0, .sigma = 0.3, .particle_count = kDeskScaleParticleCount};
    GuidanceConfig guidance;
    ProviderSpec instance_provider;
    ProviderSpec scene_provider;
    OptimizerConfig optimizer;
    RasterConfig raster;
    Vec3 background = Vec3::Zero();
    int turntable_views = 8;
    /// Write a checkpoint every this many steps during generate (0 = only at the end).
    std::uint64_t checkpoint_every = 0;
};

/// Parses config JSON and, if `load_layout`, the referenced layout. Throws
/// ValidationError listing every schema issue, IoError when the layout file
/// cannot be read.
RunConfig parse_run_config(std::string_view json_text, const std::filesystem::path &base_dir,
                           bool load_layout = true);
RunConfig load_run_config(const std::filesystem::path &path);

/// JSON with absolute paths; parse_run_config of the result gives the same config.
std::string run_config_to_json(const RunConfig &cfg);

/// Builds the guidance providers. Photometric providers also pin the cameras
/// of their target views; for target folders those come from cfg.layout.
StepContext make_step_context(const RunConfig &cfg);

/// Renders the targets a photometric provider would hold for `reference`:
/// every instance alone on its ring and the full scene on the scene ring.
/// Adds them to `provider` and pins their cameras in `ctx`.
void add_reference_targets(const SceneState &reference, const GuidanceConfig &guidance,
                           const RasterConfig &raster, const Vec3 &background,
                           PhotometricTarget &provider, StepContext &ctx);

} // namespace layoutsplat
