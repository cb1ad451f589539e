// Copyright 2026 The layoutsplat Authors
// SPDX-License-Identifier: Apache-2.0

#include "layoutsplat/errors.hpp"
#include "layoutsplat/guidance.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace layoutsplat;
using namespace layoutsplat::testing;

namespace {

InstanceLayout unit_box(const std::string &id, const Vec3 &center) {
    InstanceLayout l;
    l.id = id;
    l.prompt = id;
    l.center = center;
    return l;
}

GuidanceRequest request_for(const Image &img, double eta = 0.5) {
    GuidanceRequest r;
    r.image = &img;
    r.camera = Camera::look_at(Vec3(3, 0, 0), Vec3::Zero(), 1.0, img.width, img.height);
    r.view = {"a", 0};
    r.prompt = "a";
    r.timestep = eta;
    return r;
}

} // namespace

TEST(Providers, FlatColorMidGrayAgainstWhite) {
    const Image white(6, 4, 1.0);
    const GuidanceResidual r = FlatColor(Vec3::Constant(0.5)).provide(request_for(white), {});
    for (double v : r.residual.pixels) {
        EXPECT_EQ(v, 0.5);
    }
    EXPECT_EQ(r.weight, 1.0);
}

TEST(Providers, PhotometricExactMatchIsZero) {
    Philox4x32 rng(1, 1);
    const Image img = random_image(rng, 8, 8, 0.0, 1.0);
    PhotometricTarget p;
    p.add_target({"a", 0}, img, "a");
    const GuidanceResidual r = p.provide(request_for(img), {});
    for (double v : r.residual.pixels) {
        EXPECT_EQ(v, 0.0);
    }
    EXPECT_TRUE(p.supports_prompt("a"));
    EXPECT_FALSE(p.supports_prompt("b"));
}

TEST(Providers, PhotometricMissingViewIsExplicit) {
    const Image img(4, 4);
    PhotometricTarget p;
    p.add_target({"a", 1}, img);
    EXPECT_THROW(p.provide(request_for(img), {}), MissingAssetError);
    p.add_target({"a", 0}, Image(5, 4));
    EXPECT_THROW(p.provide(request_for(img), {}), ValidationError);
}

TEST(Providers, CheckerTwoColorsAndAzimuthPhase) {
    CheckerTexture checker(4, Vec3(1, 1, 1), Vec3(0, 0, 0));
    const Camera a = Camera::look_at(Vec3(3, 0, 0), Vec3::Zero(), 1.0, 32, 32);
    const Camera b = Camera::look_at(Vec3(0, 3, 0), Vec3::Zero(), 1.0, 32, 32);
    const Image pa = checker.pattern(a);
    const Image pb = checker.pattern(b);
    for (double v : pa.pixels) {
        EXPECT_TRUE(v == 0.0 || v == 1.0);
    }
    EXPECT_NE(pa.pixels, pb.pixels);
    EXPECT_EQ(pa.pixels, checker.pattern(a).pixels);
}

TEST(Requests, ValidateTimestepAndCondition) {
    const Image img(4, 4);
    GuidanceRequest r = request_for(img, 1.5);
    EXPECT_THROW(r.validate(), ValidationError);
    const Image cond(3, 4);
    r.timestep = 0.5;
    r.condition = &cond;
    EXPECT_THROW(r.validate(), ValidationError);
}

TEST(Schedule, LinearDecay) {
    const GuidanceConfig cfg;
    EXPECT_DOUBLE_EQ(timestep_at(0, 101, cfg), 0.98);
    EXPECT_DOUBLE_EQ(timestep_at(100, 101, cfg), 0.02);
    EXPECT_NEAR(timestep_at(50, 101, cfg), 0.5, 1e-15);
    EXPECT_DOUBLE_EQ(timestep_at(500, 101, cfg), 0.02);
    EXPECT_EQ(guidance_weight(0.3, WeightSchedule::Constant), 1.0);
    EXPECT_NEAR(guidance_weight(0.3, WeightSchedule::EtaSquared), 0.09, 1e-15);
}

TEST(Schedule, ReferenceGuidanceScales) {
    const GuidanceConfig cfg;
    EXPECT_EQ(cfg.instance_guidance_scale, 50.0);
    EXPECT_EQ(cfg.scene_guidance_scale, 100.0);
}

TEST(Cameras, InstanceRingRadiusAndAzimuths) {
    InstanceLayout l = unit_box("a", Vec3(1, 2, 0.5));
    l.extents = Vec3(2, 2, 2);
    EXPECT_NEAR(instance_camera_radius(l), 0.75 * std::sqrt(12.0), 1e-12);
    CameraRig rig;
    rig.elevation_degrees = 0.0;
    for (int k = 0; k < 8; ++k) {
        const Camera cam = sample_instance_camera(l, k, 8, rig);
        const Vec3 off = cam.position() - l.center;
        EXPECT_NEAR(off.norm(), 0.75 * std::sqrt(12.0), 1e-12);
        double az = radians_to_degrees(std::atan2(off.y(), off.x()));
        if (az < -1e-9) {
            az += 360.0;
        }
        EXPECT_NEAR(az, 45.0 * k, 1e-9);
        const Vec3 t = cam.to_camera(l.center);
        EXPECT_LT(std::hypot(t.x(), t.y()), 1e-9);
        EXPECT_EQ(cam, sample_instance_camera(l, k, 8, rig));
    }
}

TEST(Cameras, SceneBoundsExamples) {
    const std::vector<InstanceLayout> one{unit_box("a", Vec3::Zero())};
    EXPECT_NEAR(scene_bounds(one).radius, std::sqrt(3.0) / 2.0, 1e-15);

    const std::vector<InstanceLayout> two{unit_box("a", Vec3(2, 0, 0)), unit_box("b", Vec3(-2, 0, 0))};
    // Enumerate the 16 corners and take the bounding sphere about their AABB center.
    Vec3 lo = Vec3::Constant(1e9), hi = Vec3::Constant(-1e9);
    std::vector<Vec3> corners;
    for (double cx : {-2.0, 2.0}) {
        for (int c = 0; c < 8; ++c) {
            corners.emplace_back(cx + ((c & 1) ? 0.5 : -0.5), (c & 2) ? 0.5 : -0.5, (c & 4) ? 0.5 : -0.5);
            lo = lo.cwiseMin(corners.back());
            hi = hi.cwiseMax(corners.back());
        }
    }
    double r = 0.0;
    for (const Vec3 &c : corners) {
        r = std::max(r, (c - 0.5 * (lo + hi)).norm());
    }
    const SceneBounds b = scene_bounds(two);
    EXPECT_NEAR(b.radius, r, 1e-12);
    EXPECT_LT(b.center.norm(), 1e-12);
    EXPECT_THROW(sample_scene_camera(SceneBounds{}, 0, 4, CameraRig{}), NumericalError);
}

TEST(Condition, EmptyIsBlack) {
    const Camera cam = Camera::look_at(Vec3(3, 0, 0), Vec3::Zero(), 1.0, 16, 16);
    const Image img = render_layout_condition({}, cam);
    for (double v : img.pixels) {
        EXPECT_EQ(v, 0.0);
    }
}

TEST(Condition, BoxFillingTheViewTakesItsColor) {
    InstanceLayout big = unit_box("a", Vec3::Zero());
    big.extents = Vec3(1, 20, 20);
    const Camera cam = Camera::look_at(Vec3(3, 0, 0), Vec3::Zero(), 1.0, 16, 16);
    const Image img = render_layout_condition(std::vector<InstanceLayout>{big}, cam);
    const Vec3 col = layout_color(0);
    for (int y = 0; y < 16; ++y) {
        for (int x = 0; x < 16; ++x) {
            for (int c = 0; c < 3; ++c) {
                ASSERT_EQ(img.at(x, y, c), col[c]);
            }
        }
    }
}

TEST(Condition, NearerBoxOccludes) {
    const std::vector<InstanceLayout> boxes{unit_box("far", Vec3(-1, 0, 0)), unit_box("near", Vec3(1, 0, 0))};
    const Camera cam = Camera::look_at(Vec3(4, 0, 0), Vec3::Zero(), 1.0, 16, 16);
    const Image img = render_layout_condition(boxes, cam);
    const Vec3 near_col = layout_color(1);
    for (int c = 0; c < 3; ++c) {
        EXPECT_EQ(img.at(8, 8, c), near_col[c]);
    }
    // Reversing the list order swaps colors but not the occlusion.
    const std::vector<InstanceLayout> swapped{boxes[1], boxes[0]};
    const Image img2 = render_layout_condition(swapped, cam);
    for (int c = 0; c < 3; ++c) {
        EXPECT_EQ(img2.at(8, 8, c), layout_color(0)[c]);
    }
}

TEST(Condition, PermutingIdsOnlyChangesColors) {
    const std::vector<InstanceLayout> boxes{unit_box("a", Vec3(-1, 0.3, 0)), unit_box("b", Vec3(1, -0.2, 0.1))};
    std::vector<InstanceLayout> renamed = boxes;
    renamed[0].id = "zz";
    renamed[1].id = "yy";
    const Camera cam = Camera::look_at(Vec3(2, 4, 1), Vec3::Zero(), 1.0, 24, 24);
    EXPECT_EQ(render_layout_condition(boxes, cam).pixels, render_layout_condition(renamed, cam).pixels);
}

TEST(Chain, SurrogateGradientMatchesFiniteDifferences) {
    RandomScene rs = random_scene(41, 1, 10, 20, 20);
    Philox4x32 rng(5, 5);
    const Image target = random_image(rng, 20, 20, 0.0, 1.0);
    PhotometricTarget p;
    p.add_target({"a", 0}, target);
    GuidanceConfig gcfg;
    gcfg.weighting = WeightSchedule::EtaSquared;
    RasterConfig rcfg;
    rcfg.threads = 1;
    const Vec3 bg(0.2, 0.2, 0.2);

    const RenderedImage img = render_forward(assemble_scene(rs.instances), rs.camera, bg, rcfg);
    GuidanceRequest req = request_for(img.rgb, 0.4);
    req.camera = rs.camera;
    const GuidanceResidual res = p.provide(req, gcfg);
    Image scaled = res.residual;
    for (double &v : scaled.pixels) {
        v *= res.weight;
    }
    const auto grads = render_backward(rs.instances, rs.camera, bg, scaled, rcfg);

    const auto loss = [&] {
        const Image r = render_forward(assemble_scene(rs.instances), rs.camera, bg, rcfg).rgb;
        double s = 0.0;
        for (std::size_t k = 0; k < r.pixels.size(); ++k) {
            const double d = r.pixels[k] - target.pixels[k];
            s += d * d;
        }
        return 0.5 * guidance_weight(0.4, WeightSchedule::EtaSquared) * s;
    };
    auto &g = rs.instances[0].gaussians;
    for (std::size_t j = 0; j < g.size(); ++j) {
        EXPECT_LT(relative_error(grads[0].opacity[j], central_difference(g.opacity_raw[j], 1e-6, loss), 1e-7), 1e-4);
        EXPECT_LT(relative_error(grads[0].colors[j].x(), central_difference(g.colors_raw[j].x(), 1e-6, loss), 1e-7), 1e-4);
    }
}
