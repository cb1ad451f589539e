// Copyright 2026 The layoutsplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "layoutsplat/common.hpp"
#include "layoutsplat/scene.hpp"

#include <cstdint>
#include <optional>
#include <span>

namespace layoutsplat {

struct RasterConfig {
    /// Added to the diagonal of every projected covariance, in px^2.
    double dilation = 0.3;
    /// A Gaussian contributes only where its Mahalanobis distance is <= this.
    double cutoff_sigma = 3.0;
    double near_plane = 0.01;
    int tile_size = 16;
    /// Compositing stops before transmittance would fall below this.
    double min_transmittance = 1e-4;
    /// 0 = hardware concurrency.
    unsigned threads = 0;
};

struct RenderedImage {
    Image rgb;
    /// Sum of compositing weights per pixel.
    std::vector<double> alpha;
    /// Transmittance left after the last contributor.
    std::vector<double> transmittance;
    std::vector<std::uint32_t> contributors;
    /// Hash of every pixel's ordered contributor list. Two renders with equal
    /// fingerprints used the same discrete support, so the image is smooth
    /// in the parameters between them.
    std::uint64_t support_fingerprint = 0;
    std::size_t early_stopped_pixels = 0;

    int width() const { return rgb.width; }
    int height() const { return rgb.height; }
};

/// A Gaussian after perspective projection.
struct ProjectedGaussian {
    Vec2 mean = Vec2::Zero();
    /// Screen-space covariance including dilation.
    Mat2 cov = Mat2::Identity();
    Mat2 conic = Mat2::Identity();
    double depth = 0.0;
    /// Inclusive pixel range whose centers fall inside the cutoff rectangle.
    int x_min = 0;
    int x_max = -1;
    int y_min = 0;
    int y_max = -1;
};

/// Pixel (x, y) is sampled at its center (x + 0.5, y + 0.5).
inline Vec2 pixel_center(int x, int y) { return {x + 0.5, y + 0.5}; }

/// Returns nullopt when the Gaussian is behind the near plane or its cutoff
/// rectangle covers no pixel center of the viewport.
std::optional<ProjectedGaussian> project(const Vec3 &position, const Mat3 &covariance,
                                         const Camera &cam, const RasterConfig &cfg = {});

/// alpha * exp(-1/2 (q - mean)^T cov^-1 (q - mean)). Throws NumericalError if
/// `pg.cov` is not positive definite.
double pixel_opacity(const ProjectedGaussian &pg, const Vec2 &q, double alpha);

RenderedImage render_forward(const SceneSnapshot &scene, const Camera &cam, const Vec3 &background,
                             const RasterConfig &cfg = {});

/// Reference renderer: every pixel sorts all its contributors and composites
/// them exactly, without tiling or early termination.
RenderedImage render_naive_oracle(const SceneSnapshot &scene, const Camera &cam,
                                  const Vec3 &background, const RasterConfig &cfg = {});

/// Gradient of <residual, render_forward(scene)> with respect to the snapshot
/// entries. `residual` is H x W x 3 in the Image layout.
WorldGradients render_backward(const SceneSnapshot &scene, const Camera &cam,
                               const Vec3 &background, const Image &residual,
                               const RasterConfig &cfg = {});

/// Convenience: assemble, backprop, and chain to raw instance and layout parameters.
std::vector<InstanceGradients> render_backward(std::span<const Instance> instances,
                                               const Camera &cam, const Vec3 &background,
                                               const Image &residual, const RasterConfig &cfg = {});

} // namespace layoutsplat
