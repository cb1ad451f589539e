// Copyright 2026 The layoutsplat Authors
// SPDX-License-Identifier: Apache-2.0

#include "layoutsplat/errors.hpp"
#include "layoutsplat/rasterizer.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace layoutsplat;
using namespace layoutsplat::testing;

namespace {

SceneSnapshot single_gaussian(const Vec3 &pos, double sigma, double opacity, const Vec3 &color) {
    SceneSnapshot s;
    s.positions = {pos};
    s.covariances = {sigma * sigma * Mat3::Identity()};
    s.opacities = {opacity};
    s.colors = {color};
    s.owner = {0};
    s.local_index = {0};
    s.owner_ids = {"a"};
    return s;
}

Camera front_camera(int w, int h) {
    return Camera::look_at(Vec3(0, -3, 0), Vec3::Zero(), degrees_to_radians(50), w, h);
}

} // namespace

TEST(PixelOpacity, UnitCovarianceExample) {
    ProjectedGaussian pg;
    pg.mean = Vec2(0, 0);
    pg.cov = Mat2::Identity();
    EXPECT_NEAR(pixel_opacity(pg, Vec2(1, 1), 0.8), 0.8 * std::exp(-1.0), 1e-15);
    EXPECT_NEAR(pixel_opacity(pg, Vec2(0, 0), 0.8), 0.8, 1e-15);
}

TEST(PixelOpacity, RejectsIndefiniteCovariance) {
    ProjectedGaussian pg;
    pg.cov << 1.0, 2.0, 2.0, 1.0;
    EXPECT_THROW(pixel_opacity(pg, Vec2(0, 0), 0.5), NumericalError);
}

TEST(Project, BehindNearPlaneIsCulled) {
    const Camera cam = front_camera(32, 32);
    EXPECT_FALSE(project(Vec3(0, -3.005, 0), 0.01 * Mat3::Identity(), cam).has_value());
    EXPECT_FALSE(project(Vec3(0, -5, 0), 0.01 * Mat3::Identity(), cam).has_value());
    EXPECT_TRUE(project(Vec3(0, 0, 0), 0.01 * Mat3::Identity(), cam).has_value());
}

TEST(Project, CenteredMeanAndDilation) {
    const Camera cam = front_camera(32, 32);
    const auto pg = project(Vec3::Zero(), 1e-6 * Mat3::Identity(), cam);
    ASSERT_TRUE(pg);
    EXPECT_NEAR(pg->mean.x(), 16.0, 1e-12);
    EXPECT_NEAR(pg->mean.y(), 16.0, 1e-12);
    EXPECT_NEAR(pg->depth, 3.0, 1e-12);
    const double j = cam.fx / 3.0;
    EXPECT_NEAR(pg->cov(0, 0), j * j * 1e-6 + 0.3, 1e-12);
}

TEST(Project, OffscreenIsCulled) {
    const Camera cam = front_camera(32, 32);
    EXPECT_FALSE(project(Vec3(50, 0, 0), 0.01 * Mat3::Identity(), cam).has_value());
}

TEST(Forward, EmptySceneIsBackground) {
    const Camera cam = front_camera(8, 8);
    const RenderedImage img = render_forward(SceneSnapshot{}, cam, Vec3(0.1, 0.2, 0.3));
    for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
            EXPECT_EQ(img.rgb.at(x, y, 0), 0.1);
            EXPECT_EQ(img.rgb.at(x, y, 2), 0.3);
        }
    }
}

TEST(Forward, SingleGaussianCenterPixel) {
    const Camera cam = front_camera(33, 33);
    const SceneSnapshot s = single_gaussian(Vec3::Zero(), 0.05, 0.6, Vec3(1, 0, 0));
    const RenderedImage img = render_forward(s, cam, Vec3::Zero());
    // The center pixel (16, 16) samples exactly at the projected mean.
    EXPECT_NEAR(img.rgb.at(16, 16, 0), 0.6, 1e-12);
    EXPECT_NEAR(img.transmittance[16 * 33 + 16], 0.4, 1e-12);
    EXPECT_EQ(img.rgb.at(0, 0, 0), 0.0);
}

TEST(Forward, NearerGaussianOccludes) {
    const Camera cam = front_camera(33, 33);
    SceneSnapshot s = single_gaussian(Vec3(0, -1, 0), 0.05, 0.5, Vec3(1, 0, 0));
    s.positions.push_back(Vec3(0, 1, 0));
    s.covariances.push_back(0.05 * 0.05 * Mat3::Identity());
    s.opacities.push_back(0.5);
    s.colors.push_back(Vec3(0, 1, 0));
    s.owner.push_back(0);
    s.local_index.push_back(1);
    const RenderedImage img = render_forward(s, cam, Vec3::Zero());
    EXPECT_NEAR(img.rgb.at(16, 16, 0), 0.5, 1e-12);
    EXPECT_NEAR(img.rgb.at(16, 16, 1), 0.25, 1e-12);
}

TEST(Forward, EarlyStopExcludesSaturatingGaussian) {
    const Camera cam = front_camera(17, 17);
    SceneSnapshot s;
    for (int i = 0; i < 7; ++i) {
        s.positions.push_back(Vec3(0, -1.0 + 0.2 * i, 0));
        s.covariances.push_back(0.0025 * Mat3::Identity());
        s.opacities.push_back(0.8);
        s.colors.push_back(Vec3(1, 1, 1));
        s.owner.push_back(0);
        s.local_index.push_back(static_cast<std::uint32_t>(i));
    }
    s.owner_ids = {"a"};
    const RenderedImage img = render_forward(s, cam, Vec3::Zero());
    const std::size_t p = 8 * 17 + 8;
    // 0.2^5 = 3.2e-4 is kept; the sixth would leave 6.4e-5 and is excluded.
    EXPECT_EQ(img.contributors[p], 5u);
    EXPECT_NEAR(img.transmittance[p], 3.2e-4, 1e-15);
    EXPECT_NEAR(img.rgb.at(8, 8, 0), 1.0 - 3.2e-4, 1e-12);
    EXPECT_GE(img.early_stopped_pixels, 1u);
}

TEST(Forward, MatchesOracleWithoutSaturation) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        RandomScene rs = random_scene(seed, 3, 60, 48, 40);
        for (auto &inst : rs.instances) {
            for (auto &o : inst.gaussians.opacity_raw) {
                o -= 2.0;
            }
        }
        const SceneSnapshot s = assemble_scene(rs.instances);
        RasterConfig cfg;
        cfg.threads = 2;
        const RenderedImage fast = render_forward(s, rs.camera, Vec3(0.2, 0.3, 0.4), cfg);
        const RenderedImage slow = render_naive_oracle(s, rs.camera, Vec3(0.2, 0.3, 0.4), cfg);
        ASSERT_EQ(fast.early_stopped_pixels, 0u);
        EXPECT_LT(max_abs_diff(fast.rgb, slow.rgb), 1e-12);
        EXPECT_EQ(fast.contributors, slow.contributors);
    }
}

TEST(Forward, PartitionOfUnity) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const RandomScene rs = random_scene(seed + 100, 2, 300, 40, 40);
        const RenderedImage img = render_forward(assemble_scene(rs.instances), rs.camera, Vec3::Zero());
        for (std::size_t p = 0; p < img.alpha.size(); ++p) {
            EXPECT_NEAR(img.alpha[p] + img.transmittance[p], 1.0, 1e-9);
        }
    }
}

TEST(Forward, ThreadCountDoesNotChangeOutput) {
    const RandomScene rs = random_scene(21, 3, 200, 64, 48);
    const SceneSnapshot s = assemble_scene(rs.instances);
    RasterConfig one, many;
    one.threads = 1;
    many.threads = 4;
    const RenderedImage a = render_forward(s, rs.camera, Vec3::Zero(), one);
    const RenderedImage b = render_forward(s, rs.camera, Vec3::Zero(), many);
    EXPECT_EQ(a.rgb.pixels, b.rgb.pixels);
    EXPECT_EQ(a.support_fingerprint, b.support_fingerprint);

    Philox4x32 rng(1, 1);
    const Image r = random_image(rng, 64, 48);
    const WorldGradients ga = render_backward(s, rs.camera, Vec3::Zero(), r, one);
    const WorldGradients gb = render_backward(s, rs.camera, Vec3::Zero(), r, many);
    for (std::size_t i = 0; i < s.size(); ++i) {
        EXPECT_EQ(ga.positions[i], gb.positions[i]);
        EXPECT_EQ(ga.covariances[i], gb.covariances[i]);
        EXPECT_EQ(ga.opacities[i], gb.opacities[i]);
    }
}

TEST(Backward, RejectsMismatchedResidual) {
    const Camera cam = front_camera(8, 8);
    EXPECT_THROW(render_backward(single_gaussian(Vec3::Zero(), 0.1, 0.5, Vec3::Ones()), cam,
                                 Vec3::Zero(), Image(4, 4)),
                 ValidationError);
}

TEST(Backward, SnapshotGradientMatchesFiniteDifferences) {
    RandomScene rs = random_scene(31, 1, 12, 24, 24);
    SceneSnapshot s = assemble_scene(rs.instances);
    Philox4x32 rng(2, 2);
    const Image r = random_image(rng, 24, 24);
    const Vec3 bg(0.3, 0.1, 0.5);
    RasterConfig cfg;
    cfg.threads = 1;
    const WorldGradients g = render_backward(s, rs.camera, bg, r, cfg);
    const std::uint64_t fp0 = render_forward(s, rs.camera, bg, cfg).support_fingerprint;
    const auto f = [&] { return dot(render_forward(s, rs.camera, bg, cfg).rgb, r); };
    const auto same_support = [&] { return render_forward(s, rs.camera, bg, cfg).support_fingerprint == fp0; };

    int checked = 0;
    const double h = 1e-6;
    for (std::size_t i = 0; i < s.size(); ++i) {
        auto check = [&](double &x, double analytic) {
            const double x0 = x;
            x = x0 + h;
            const bool up = same_support();
            x = x0 - h;
            const bool down = same_support();
            x = x0;
            if (!up || !down) {
                return;
            }
            ++checked;
            EXPECT_LT(relative_error(analytic, central_difference(x, h, f), 1e-6), 1e-4);
        };
        for (int a = 0; a < 3; ++a) {
            check(s.positions[i][a], g.positions[i][a]);
            check(s.colors[i][a], g.colors[i][a]);
        }
        check(s.opacities[i], g.opacities[i]);
        // Symmetric perturbation of an off-diagonal pair carries both entries.
        for (int a = 0; a < 3; ++a) {
            for (int b = a; b < 3; ++b) {
                const double analytic = a == b ? g.covariances[i](a, a) : 2.0 * g.covariances[i](a, b);
                Mat3 &cov = s.covariances[i];
                double t = 0.0;
                auto fs = [&] {
                    const Mat3 saved = cov;
                    cov(a, b) += t;
                    if (a != b) {
                        cov(b, a) += t;
                    }
                    const double v = f();
                    cov = saved;
                    return v;
                };
                t = h;
                const double fp = fs();
                t = -h;
                const double fm = fs();
                EXPECT_LT(relative_error(analytic, (fp - fm) / (2 * h), 1e-6), 1e-4);
            }
        }
    }
    EXPECT_GT(checked, 50);
}
