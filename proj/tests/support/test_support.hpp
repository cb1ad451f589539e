// Copyright 2026 The layoutsplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "layoutsplat/guidance.hpp"
#include "layoutsplat/optimizer.hpp"
#include "layoutsplat/rasterizer.hpp"
#include "layoutsplat/rng.hpp"
#include "layoutsplat/scene.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace layoutsplat::testing {

/// Uniform in [lo, hi).
double uniform(Philox4x32 &rng, double lo, double hi);

InstanceLayout random_layout(Philox4x32 &rng, const std::string &id);

/// Gaussians scattered through the layout box with random shape and color.
/// `scale_lo`/`scale_hi` bound the log-scale.
InstanceGaussians random_gaussians(Philox4x32 &rng, const InstanceLayout &layout, std::size_t m,
                                   double scale_lo = -2.5, double scale_hi = -1.2);

struct RandomScene {
    std::vector<Instance> instances;
    Camera camera;
};

/// `instances` boxes near the origin, each with `per_instance` Gaussians, and
/// a camera on a ring looking at the scene with the requested image size.
RandomScene random_scene(std::uint64_t seed, int instances, std::size_t per_instance, int width,
                         int height);

/// Random world-frame snapshot without owners' layout structure.
SceneSnapshot random_snapshot(std::uint64_t seed, std::size_t n);

/// Image filled with uniform values in [lo, hi).
Image random_image(Philox4x32 &rng, int width, int height, double lo = -1.0, double hi = 1.0);

double dot(const Image &a, const Image &b);
double max_abs_diff(const Image &a, const Image &b);
double psnr(const Image &a, const Image &b);

/// (f(x + h) - f(x - h)) / 2h, restoring x afterwards.
double central_difference(double &x, double h, const std::function<double()> &f);

/// Hash of every discrete choice the optimizer objective makes at the
/// current parameters: per-pixel contributor lists of each guided render,
/// plus the hinge side and nearest face of every Gaussian center. Equal
/// hashes mean the objective is smooth between the two parameter sets.
std::uint64_t objective_support(const SceneState &state, const OptimizerConfig &cfg,
                                const StepContext &ctx);

struct GuardedDifference {
    double value = 0.0;
    double h = 0.0;
    bool ok = false;
};

/// Central difference that starts at step `h` and shrinks it tenfold, down
/// to `min_h`, until `support` is unchanged at both x + h and x - h.
GuardedDifference guarded_central_difference(double &x, double h, const std::function<double()> &f,
                                             const std::function<std::uint64_t()> &support,
                                             double min_h = 1e-7);

/// Symmetric relative error with an absolute floor.
double relative_error(double analytic, double numeric, double floor = 1e-8);

/// CDF of FoldedNormal(mu, sigma^2) truncated to [lower, inf), tabulated by
/// cellwise Simpson integration of the density and linearly interpolated.
std::function<double(double)> truncated_folded_normal_cdf_numeric(double mu, double sigma,
                                                                  double lower = 1.0);

/// Two-sided one-sample Kolmogorov-Smirnov statistic of `samples` against `cdf`.
double ks_statistic(std::vector<double> samples, const std::function<double(double)> &cdf);

/// Asymptotic KS critical value at significance 0.01.
inline double ks_critical_001(std::size_t n) { return 1.6276 / std::sqrt(static_cast<double>(n)); }

/// Center-to-boundary distance of an axis-aligned box along `dir`.
double ray_box_exit(const Vec3 &half_extents, const Vec3 &dir);

/// Fresh empty directory under the system temp folder.
std::filesystem::path temp_dir(const std::string &name);

} // namespace layoutsplat::testing
