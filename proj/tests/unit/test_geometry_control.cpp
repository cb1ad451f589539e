// Copyright 2026 The layoutsplat Authors
// SPDX-License-Identifier: Apache-2.0

#include "layoutsplat/errors.hpp"
#include "layoutsplat/geometry_control.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace layoutsplat;
using namespace layoutsplat::testing;

namespace {

InstanceLayout unit_cube() {
    InstanceLayout l;
    l.id = "cube";
    l.prompt = "a cube";
    return l;
}

bool inside(const Vec3 &p, const InstanceLayout &l) {
    const Vec3 h = l.half_extents();
    return std::abs(p.x()) <= h.x() && std::abs(p.y()) <= h.y() && std::abs(p.z()) <= h.z();
}

} // namespace

TEST(SamplingConfig, ValidateRejectsBadValues) {
    SurfaceSamplingConfig c;
    c.mu = 0.5;
    c.sigma = 0.0;
    c.particle_count = 0;
    try {
        c.validate();
        FAIL();
    } catch (const ValidationError &e) {
        EXPECT_EQ(e.issues().size(), 3u);
    }
}

TEST(SamplingConfig, FullScaleDefault) {
    EXPECT_EQ(SurfaceSamplingConfig{}.particle_count, 100000);
    EXPECT_EQ(kDeskScaleParticleCount, 5000);
}

TEST(FoldedNormal, CdfMatchesNumericIntegration) {
    const auto oracle = truncated_folded_normal_cdf_numeric(0.0, 1.0, 0.0);
    for (double x : {0.1, 0.5, 1.0, 2.0, 3.0}) {
        EXPECT_NEAR(folded_normal_cdf(x, 0.0, 1.0), oracle(x), 1e-9);
    }
    EXPECT_NEAR(folded_normal_cdf(1.0, 1.0, 0.3) + folded_normal_sf(1.0, 1.0, 0.3), 1.0, 1e-15);
}

TEST(FoldedNormal, QuantileInvertsTruncatedCdf) {
    const auto oracle = truncated_folded_normal_cdf_numeric(1.0, 0.3, 1.0);
    for (double u : {1e-6, 0.01, 0.3, 0.5, 0.9, 0.999999}) {
        const double x = truncated_folded_normal_quantile(u, 1.0, 0.3, 1.0);
        EXPECT_GE(x, 1.0);
        EXPECT_NEAR(oracle(x), u, 1e-7);
    }
}

TEST(BoundaryDistance, AxisAndDiagonal) {
    const Vec3 half(0.5, 1.0, 2.0);
    EXPECT_NEAR(boundary_distance(half, Vec3(1, 0, 0)), 0.5, 1e-15);
    EXPECT_NEAR(boundary_distance(half, Vec3(0, -1, 0)), 1.0, 1e-15);
    const Vec3 d = Vec3(1, 1, 1).normalized();
    EXPECT_NEAR(boundary_distance(half, d), 0.5 * std::sqrt(3.0), 1e-12);
}

TEST(Sampling, ContainedDeterministicAndSized) {
    Philox4x32 rng(12, 0);
    SurfaceSamplingConfig cfg;
    cfg.particle_count = 5000;
    for (int t = 0; t < 5; ++t) {
        const InstanceLayout l = random_layout(rng, "x");
        const auto a = sample_surface_positions(l, cfg, 77);
        const auto b = sample_surface_positions(l, cfg, 77);
        ASSERT_EQ(a.size(), 5000u);
        EXPECT_EQ(a, b);
        for (const Vec3 &p : a) {
            ASSERT_TRUE(inside(p, l));
        }
    }
}

TEST(Sampling, ReciprocalRadiusFollowsTruncatedFoldedNormal) {
    const InstanceLayout l = unit_cube();
    SurfaceSamplingConfig cfg;
    cfg.particle_count = 20000;
    const auto pts = sample_surface_positions(l, cfg, 3);
    std::vector<double> x;
    for (const Vec3 &p : pts) {
        x.push_back(ray_box_exit(l.half_extents(), p.normalized()) / p.norm());
    }
    const double d = ks_statistic(x, truncated_folded_normal_cdf_numeric(1.0, 0.3, 1.0));
    EXPECT_LT(d, ks_critical_001(x.size()));
}

TEST(Sampling, TinySigmaLandsOnSurface) {
    const InstanceLayout l = unit_cube();
    SurfaceSamplingConfig cfg;
    cfg.sigma = 1e-7;
    cfg.particle_count = 2000;
    for (const Vec3 &p : sample_surface_positions(l, cfg, 5)) {
        const double rb = ray_box_exit(l.half_extents(), p.normalized());
        EXPECT_NEAR(p.norm() / rb, 1.0, 1e-3);
    }
}

TEST(NearestSurface, Examples) {
    const InstanceLayout l = unit_cube();
    EXPECT_EQ(nearest_surface_point(Vec3(0.5, 0.1, -0.2), l), Vec3(0.5, 0.1, -0.2));
    EXPECT_EQ(nearest_surface_point(Vec3::Zero(), l), Vec3(0.5, 0, 0));
    EXPECT_EQ(nearest_surface_point(Vec3(2, 0, 0), l), Vec3(0.5, 0, 0));
    EXPECT_EQ(nearest_surface_point(Vec3(0.1, -0.45, 0.0), l), Vec3(0.1, -0.5, 0.0));
    EXPECT_EQ(nearest_surface_point(Vec3(3, -3, 0.2), l), Vec3(0.5, -0.5, 0.2));
}

TEST(Flatness, Examples) {
    const InstanceLayout l = unit_cube();
    InstanceGaussians g;
    g.resize(1);
    g.rotations[0] = Vec4(1, 0, 0, 0);
    g.positions[0] = Vec3::Zero();
    g.scales_raw[0] = Vec3::Constant(std::log(0.2));
    EXPECT_NEAR(flatness_regularizer(g, l), 0.1, 1e-12);

    g.scales_raw[0] = Vec3::Constant(std::log(0.4));
    EXPECT_NEAR(flatness_regularizer(g, l), 0.2, 1e-12);

    g.positions[0] = Vec3(0.5, 0.2, 0.1);
    EXPECT_EQ(flatness_regularizer(g, l), 0.0);
}

TEST(Flatness, GradientMatchesFiniteDifferences) {
    Philox4x32 rng(8, 8);
    InstanceLayout l = random_layout(rng, "x");
    InstanceGaussians g = random_gaussians(rng, l, 30);
    InstanceGradients grad(g.size());
    const double v = flatness_regularizer(g, l, grad, 2.0);
    EXPECT_NEAR(v, flatness_regularizer(g, l), 1e-15);
    const auto f = [&] { return 2.0 * flatness_regularizer(g, l); };
    for (std::size_t j = 0; j < g.size(); ++j) {
        for (int a = 0; a < 3; ++a) {
            EXPECT_LT(relative_error(grad.scales[j][a], central_difference(g.scales_raw[j][a], 1e-6, f), 1e-8), 1e-5);
            EXPECT_LT(relative_error(grad.positions[j][a], central_difference(g.positions[j][a], 1e-7, f), 1e-8), 1e-5);
        }
    }
}

TEST(Flatness, DescentShrinksScales) {
    Philox4x32 rng(9, 9);
    const InstanceLayout l = random_layout(rng, "x");
    InstanceGaussians g = random_gaussians(rng, l, 40);
    auto mean_scale = [&] {
        double s = 0.0;
        for (const auto &v : g.scales_raw) {
            s += v.array().exp().sum();
        }
        return s;
    };
    double prev = flatness_regularizer(g, l);
    const double scale0 = mean_scale();
    for (int it = 0; it < 50; ++it) {
        InstanceGradients grad(g.size());
        flatness_regularizer(g, l, grad, 1.0);
        for (std::size_t j = 0; j < g.size(); ++j) {
            g.scales_raw[j] -= 0.5 * grad.scales[j];
        }
        const double now = flatness_regularizer(g, l);
        EXPECT_LE(now, prev);
        prev = now;
    }
    EXPECT_LT(mean_scale(), scale0);
}

TEST(InitInstance, DefaultsAndDeterminism) {
    const InstanceLayout l = unit_cube();
    SurfaceSamplingConfig cfg;
    cfg.particle_count = 600;
    const InstanceGaussians a = init_instance(l, cfg, 4);
    const InstanceGaussians b = init_instance(l, cfg, 4);
    EXPECT_EQ(a, b);
    ASSERT_EQ(a.size(), 600u);
    const double spacing = std::sqrt(6.0 / 600.0);
    for (std::size_t j = 0; j < a.size(); ++j) {
        EXPECT_EQ(a.rotations[j], Vec4(1, 0, 0, 0));
        EXPECT_NEAR(a.scales_raw[j].x(), std::log(1.5 * spacing), 1e-12);
        EXPECT_NEAR(sigmoid(a.opacity_raw[j]), 0.1, 1e-12);
        EXPECT_NEAR(sigmoid(a.colors_raw[j].y()), 0.5, 1e-12);
    }
}

TEST(InitInstance, SeedIndependentOfInstanceOrder) {
    EXPECT_EQ(instance_seed(1, "chair"), instance_seed(1, "chair"));
    EXPECT_NE(instance_seed(1, "chair"), instance_seed(1, "table"));
    EXPECT_NE(instance_seed(1, "chair"), instance_seed(2, "chair"));
}
