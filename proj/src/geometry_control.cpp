// Copyright 2026 The layoutsplat Authors
// SPDX-License-Identifier: Apache-2.0

#include "layoutsplat/geometry_control.hpp"

#include "layoutsplat/errors.hpp"
#include "layoutsplat/rng.hpp"

#include <cmath>
#include <limits>

namespace layoutsplat {

void SurfaceSamplingConfig::validate() const {
    std::vector<std::string> issues;
    if (!std::isfinite(mu) || mu < 1.0) {
        issues.emplace_back("sampling.mu must be finite and >= 1");
    }
    if (!std::isfinite(sigma) || sigma <= 0.0) {
        issues.emplace_back("sampling.sigma must be finite and > 0");
    }
    if (particle_count < 1) {
        issues.emplace_back("sampling.particle_count must be >= 1");
    }
    if (!issues.empty()) {
        throw ValidationError(std::move(issues));
    }
}

double folded_normal_cdf(double x, double mu, double sigma) {
    if (x <= 0.0) {
        return 0.0;
    }
    const double s = sigma * std::numbers::sqrt2;
    return 0.5 * (std::erf((x - mu) / s) + std::erf((x + mu) / s));
}

double folded_normal_sf(double x, double mu, double sigma) {
    if (x <= 0.0) {
        return 1.0;
    }
    const double s = sigma * std::numbers::sqrt2;
    return 0.5 * (std::erfc((x - mu) / s) + std::erfc((x + mu) / s));
}

namespace {

double folded_normal_pdf(double x, double mu, double sigma) {
    const double a = (x - mu) / sigma;
    const double b = (x + mu) / sigma;
    const double norm = 1.0 / (sigma * std::sqrt(2.0 * kPi));
    return norm * (std::exp(-0.5 * a * a) + std::exp(-0.5 * b * b));
}

} // namespace

double truncated_folded_normal_quantile(double u, double mu, double sigma, double lower) {
    // Solve sf(x) = (1 - u) sf(lower) on [lower, inf).
    const double target = (1.0 - u) * folded_normal_sf(lower, mu, sigma);
    double lo = lower;
    double hi = std::max(lower, mu) + sigma;
    while (folded_normal_sf(hi, mu, sigma) > target) {
        lo = hi;
        hi += 4.0 * sigma + (hi - lower);
    }
    double x = 0.5 * (lo + hi);
    for (int iter = 0; iter < 200; ++iter) {
        const double f = folded_normal_sf(x, mu, sigma) - target;
        if (f > 0.0) {
            lo = x;
        } else {
            hi = x;
        }
        const double slope = -folded_normal_pdf(x, mu, sigma);
        double next = slope != 0.0 ? x - f / slope : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) {
            next = 0.5 * (lo + hi);
        }
        if (std::abs(next - x) <= 1e-15 * std::max(1.0, std::abs(x)) || hi - lo <= 1e-15 * hi) {
            x = next;
            break;
        }
        x = next;
    }
    return x;
}

double boundary_distance(const Vec3 &half_extents, const Vec3 &direction) {
    double best = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        const double d = std::abs(direction[a]);
        if (d > 0.0) {
            best = std::min(best, half_extents[a] / d);
        }
    }
    return best;
}

std::vector<Vec3> sample_surface_positions(const InstanceLayout &layout,
                                           const SurfaceSamplingConfig &cfg, std::uint64_t seed) {
    cfg.validate();
    layout.validate();
    const Vec3 half = layout.half_extents();
    Philox4x32 rng(seed, /*stream=*/0x5375726661636531ull);
    std::vector<Vec3> out;
    out.reserve(static_cast<std::size_t>(cfg.particle_count));
    for (int i = 0; i < cfg.particle_count; ++i) {
        const double z = 2.0 * rng.next_open01() - 1.0;
        const double theta = kTwoPi * rng.next_open01();
        const double rxy = std::sqrt(std::max(0.0, 1.0 - z * z));
        const Vec3 dir(rxy * std::cos(theta), rxy * std::sin(theta), z);
        const double ratio = truncated_folded_normal_quantile(rng.next_open01(), cfg.mu, cfg.sigma);
        out.push_back(dir * (boundary_distance(half, dir) / ratio));
    }
    return out;
}

Vec3 nearest_surface_point(const Vec3 &local, const InstanceLayout &layout) {
    const Vec3 half = layout.half_extents();
    const bool inside = (local.array().abs() <= half.array()).all();
    if (!inside) {
        return local.cwiseMax(-half).cwiseMin(half);
    }
    int axis = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        const double gap = half[a] - std::abs(local[a]);
        if (gap < best) {
            best = gap;
            axis = a;
        }
    }
    Vec3 q = local;
    q[axis] = local[axis] >= 0.0 ? half[axis] : -half[axis];
    return q;
}

double flatness_regularizer(const InstanceGaussians &g, const InstanceLayout &layout) {
    InstanceGradients unused(g.size());
    return flatness_regularizer(g, layout, unused, 0.0);
}

double flatness_regularizer(const InstanceGaussians &g, const InstanceLayout &layout,
                            InstanceGradients &grad, double weight) {
    if (g.size() == 0) {
        return 0.0;
    }
    const double inv_m = 1.0 / static_cast<double>(g.size());
    double total = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
        const Vec3 &p = g.positions[j];
        const Vec3 diff = p - nearest_surface_point(p, layout);
        const double dist = diff.norm();
        const Vec3 s = g.scales_raw[j].array().exp().matrix();
        const double mean_scale = s.sum() / 3.0;
        total += mean_scale * dist;
        if (weight != 0.0) {
            if (dist > 0.0) {
                grad.positions[j] += weight * inv_m * mean_scale * (diff / dist);
            }
            grad.scales[j] += weight * inv_m * dist * (s / 3.0);
        }
    }
    return total * inv_m;
}

std::uint64_t instance_seed(std::uint64_t scene_seed, const std::string &instance_id) {
    return mix64(scene_seed ^ fnv1a64(instance_id));
}

InstanceGaussians init_instance(const InstanceLayout &layout, const SurfaceSamplingConfig &cfg,
                                std::uint64_t seed) {
    InstanceGaussians g;
    g.positions = sample_surface_positions(layout, cfg, seed);
    const std::size_t m = g.positions.size();
    const Vec3 &e = layout.extents;
    const double area = 2.0 * (e.x() * e.y() + e.y() * e.z() + e.x() * e.z());
    const double spacing = std::sqrt(area / static_cast<double>(m));
    g.rotations.assign(m, Vec4(1.0, 0.0, 0.0, 0.0));
    g.scales_raw.assign(m, Vec3::Constant(std::log(1.5 * spacing)));
    g.opacity_raw.assign(m, logit(0.1));
    g.colors_raw.assign(m, Vec3::Zero());
    return g;
}

} // namespace layoutsplat
