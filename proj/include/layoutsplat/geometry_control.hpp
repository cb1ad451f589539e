// Copyright 2026 The layoutsplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "layoutsplat/common.hpp"
#include "layoutsplat/scene.hpp"

#include <cstdint>
#include <vector>

namespace layoutsplat {

/// Particle count used for full-scale generation.
inline constexpr int kFullScaleParticleCount = 100000;
/// Particle count for desktop-sized runs.
inline constexpr int kDeskScaleParticleCount = 5000;

/// Placement law for Gaussian centers. The normalized reciprocal radius
/// X = r_b(d) / |p| (r_b = center-to-boundary distance along the sample's
/// direction d) follows a folded normal FN(mu, sigma^2) truncated to [1, inf),
/// so every sample lies inside the box and mass concentrates near its surface.
struct SurfaceSamplingConfig {
    double mu = 1.0;
    double sigma = 0.3;
    int particle_count = kFullScaleParticleCount;

    void validate() const;
};

/// CDF of the folded normal |N(mu, sigma^2)| at x >= 0.
double folded_normal_cdf(double x, double mu, double sigma);
/// Survival function 1 - CDF, accurate in the upper tail.
double folded_normal_sf(double x, double mu, double sigma);
/// Inverse CDF of the folded normal truncated to [lower, inf), u in (0, 1).
double truncated_folded_normal_quantile(double u, double mu, double sigma, double lower = 1.0);

/// Distance from the box center to its boundary along unit direction d.
double boundary_distance(const Vec3 &half_extents, const Vec3 &direction);

std::vector<Vec3> sample_surface_positions(const InstanceLayout &layout,
                                           const SurfaceSamplingConfig &cfg, std::uint64_t seed);

/// Closest point on the surface of the layout box (local frame). Interior
/// points go to the nearest face, ties resolved in axis order x, y, z with
/// the positive face first; exterior points clamp componentwise.
Vec3 nearest_surface_point(const Vec3 &local, const InstanceLayout &layout);

/// Flatness term: (1/M) sum_i mean(S_i) |q_i - p_i| with q_i the nearest surface point.
double flatness_regularizer(const InstanceGaussians &g, const InstanceLayout &layout);

/// Value plus gradient with respect to positions and scales_raw.
double flatness_regularizer(const InstanceGaussians &g, const InstanceLayout &layout,
                            InstanceGradients &grad, double weight);

/// Seed for one instance's sampling stream; stable under reordering of instances.
std::uint64_t instance_seed(std::uint64_t scene_seed, const std::string &instance_id);

InstanceGaussians init_instance(const InstanceLayout &layout, const SurfaceSamplingConfig &cfg,
                                std::uint64_t seed);

} // namespace layoutsplat
