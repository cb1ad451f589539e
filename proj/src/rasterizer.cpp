// Copyright 2026 The layoutsplat Authors
// SPDX-License-Identifier: Apache-2.0

#include "layoutsplat/rasterizer.hpp"

#include "layoutsplat/errors.hpp"
#include "layoutsplat/parallel.hpp"
#include "layoutsplat/rng.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace layoutsplat {

namespace {

struct CameraSpaceTerms {
    Vec3 t;           // camera-space center
    Mat3 cov_cam;     // camera-space covariance
    Eigen::Matrix<double, 2, 3> jac;
};

CameraSpaceTerms camera_terms(const Vec3 &position, const Mat3 &covariance, const Camera &cam) {
    CameraSpaceTerms ct;
    ct.t = cam.to_camera(position);
    ct.cov_cam = cam.rotation * covariance * cam.rotation.transpose();
    const double z = ct.t.z();
    const double iz = 1.0 / z;
    ct.jac << cam.fx * iz, 0.0, -cam.fx * ct.t.x() * iz * iz, 0.0, cam.fy * iz,
        -cam.fy * ct.t.y() * iz * iz;
    return ct;
}

/// Flattened, depth-sorted per-Gaussian data used by the compositing loops.
struct Splat {
    double mx, my;
    double ca, cb, cc; // conic [[ca, cb], [cb, cc]]
    double opacity;
    double r, g, b;
    std::uint32_t source; // snapshot index
};

struct PreparedScene {
    std::vector<Splat> splats; // front to back
    int tiles_x = 0;
    int tiles_y = 0;
    std::vector<std::uint32_t> tile_offsets; // size tiles + 1
    std::vector<std::uint32_t> tile_entries; // indices into splats
};

struct SortKey {
    double depth;
    std::uint32_t owner;
    std::uint32_t local;
    std::uint32_t source;
};

bool key_less(const SortKey &a, const SortKey &b) {
    if (a.depth != b.depth) {
        return a.depth < b.depth;
    }
    if (a.owner != b.owner) {
        return a.owner < b.owner;
    }
    if (a.local != b.local) {
        return a.local < b.local;
    }
    return a.source < b.source;
}

PreparedScene prepare(const SceneSnapshot &scene, const Camera &cam, const RasterConfig &cfg) {
    const std::size_t n = scene.size();
    std::vector<std::optional<ProjectedGaussian>> projected(n);
    parallel_for(n, cfg.threads, [&](std::size_t i) {
        projected[i] = project(scene.positions[i], scene.covariances[i], cam, cfg);
    });

    std::vector<SortKey> keys;
    keys.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (projected[i]) {
            keys.push_back({projected[i]->depth, scene.owner[i], scene.local_index[i],
                            static_cast<std::uint32_t>(i)});
        }
    }
    std::sort(keys.begin(), keys.end(), key_less);

    PreparedScene prep;
    const int ts = cfg.tile_size;
    prep.tiles_x = (cam.width + ts - 1) / ts;
    prep.tiles_y = (cam.height + ts - 1) / ts;
    const std::size_t tile_count = static_cast<std::size_t>(prep.tiles_x) * prep.tiles_y;

    prep.splats.reserve(keys.size());
    std::vector<std::uint32_t> counts(tile_count, 0);
    for (const auto &key : keys) {
        const auto &pg = *projected[key.source];
        const Vec3 &c = scene.colors[key.source];
        prep.splats.push_back({pg.mean.x(), pg.mean.y(), pg.conic(0, 0), pg.conic(0, 1),
                               pg.conic(1, 1), scene.opacities[key.source], c.x(), c.y(), c.z(),
                               key.source});
        for (int ty = pg.y_min / ts; ty <= pg.y_max / ts; ++ty) {
            for (int tx = pg.x_min / ts; tx <= pg.x_max / ts; ++tx) {
                ++counts[static_cast<std::size_t>(ty) * prep.tiles_x + tx];
            }
        }
    }
    prep.tile_offsets.assign(tile_count + 1, 0);
    for (std::size_t t = 0; t < tile_count; ++t) {
        prep.tile_offsets[t + 1] = prep.tile_offsets[t] + counts[t];
    }
    prep.tile_entries.resize(prep.tile_offsets.back());
    std::vector<std::uint32_t> cursor(prep.tile_offsets.begin(), prep.tile_offsets.end() - 1);
    for (std::size_t s = 0; s < keys.size(); ++s) {
        const auto &pg = *projected[keys[s].source];
        for (int ty = pg.y_min / ts; ty <= pg.y_max / ts; ++ty) {
            for (int tx = pg.x_min / ts; tx <= pg.x_max / ts; ++tx) {
                prep.tile_entries[cursor[static_cast<std::size_t>(ty) * prep.tiles_x + tx]++] =
                    static_cast<std::uint32_t>(s);
            }
        }
    }
    return prep;
}

/// Opacity of splat s at (qx, qy); false when the pixel is outside the cutoff.
inline bool splat_alpha(const Splat &s, double qx, double qy, double cutoff2, double &alpha,
                        double &gauss, double &dx, double &dy) {
    dx = qx - s.mx;
    dy = qy - s.my;
    const double d2 = s.ca * dx * dx + 2.0 * s.cb * dx * dy + s.cc * dy * dy;
    if (d2 > cutoff2) {
        return false;
    }
    gauss = std::exp(-0.5 * d2);
    alpha = s.opacity * gauss;
    return true;
}

inline std::uint64_t hash_step(std::uint64_t h, std::uint64_t v) {
    return (h ^ (v + 0x9E3779B97F4A7C15ull)) * 0x100000001b3ull;
}

RenderedImage make_image(const Camera &cam) {
    RenderedImage img;
    img.rgb = Image(cam.width, cam.height);
    const std::size_t px = static_cast<std::size_t>(cam.width) * cam.height;
    img.alpha.assign(px, 0.0);
    img.transmittance.assign(px, 1.0);
    img.contributors.assign(px, 0);
    return img;
}

void fill_background(RenderedImage &img, const Vec3 &background) {
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            for (int c = 0; c < 3; ++c) {
                img.rgb.at(x, y, c) = background[c];
            }
        }
    }
}

struct Contribution {
    std::uint32_t entry; // position within the tile's entry list
    double alpha;
    double gauss; // alpha / opacity
    double transmittance; // before this splat
    double dx, dy;
};

} // namespace

std::optional<ProjectedGaussian> project(const Vec3 &position, const Mat3 &covariance,
                                         const Camera &cam, const RasterConfig &cfg) {
    const Vec3 t = cam.to_camera(position);
    if (!(t.z() > cfg.near_plane)) {
        return std::nullopt;
    }
    const CameraSpaceTerms ct = camera_terms(position, covariance, cam);
    ProjectedGaussian pg;
    pg.depth = t.z();
    pg.mean = Vec2(cam.fx * t.x() / t.z() + cam.cx, cam.fy * t.y() / t.z() + cam.cy);
    pg.cov = ct.jac * ct.cov_cam * ct.jac.transpose();
    pg.cov(0, 1) = pg.cov(1, 0) = 0.5 * (pg.cov(0, 1) + pg.cov(1, 0));
    pg.cov(0, 0) += cfg.dilation;
    pg.cov(1, 1) += cfg.dilation;
    const double det = pg.cov.determinant();
    if (!(det > 0.0) || !(pg.cov(0, 0) > 0.0)) {
        throw NumericalError("projected covariance is singular");
    }
    pg.conic << pg.cov(1, 1) / det, -pg.cov(0, 1) / det, -pg.cov(0, 1) / det, pg.cov(0, 0) / det;

    const double rx = cfg.cutoff_sigma * std::sqrt(pg.cov(0, 0));
    const double ry = cfg.cutoff_sigma * std::sqrt(pg.cov(1, 1));
    const double x_lo = std::ceil(pg.mean.x() - rx - 0.5);
    const double x_hi = std::floor(pg.mean.x() + rx - 0.5);
    const double y_lo = std::ceil(pg.mean.y() - ry - 0.5);
    const double y_hi = std::floor(pg.mean.y() + ry - 0.5);
    if (!(x_hi >= 0.0) || !(y_hi >= 0.0) || !(x_lo <= cam.width - 1) || !(y_lo <= cam.height - 1)) {
        return std::nullopt;
    }
    pg.x_min = static_cast<int>(std::max(x_lo, 0.0));
    pg.x_max = static_cast<int>(std::min(x_hi, static_cast<double>(cam.width - 1)));
    pg.y_min = static_cast<int>(std::max(y_lo, 0.0));
    pg.y_max = static_cast<int>(std::min(y_hi, static_cast<double>(cam.height - 1)));
    if (pg.x_min > pg.x_max || pg.y_min > pg.y_max) {
        return std::nullopt;
    }
    return pg;
}

double pixel_opacity(const ProjectedGaussian &pg, const Vec2 &q, double alpha) {
    const double det = pg.cov.determinant();
    if (!(det > 0.0) || !(pg.cov(0, 0) > 0.0)) {
        throw NumericalError("pixel_opacity: covariance is not positive definite");
    }
    const Vec2 d = q - pg.mean;
    const double m2 = d.dot(pg.cov.inverse() * d);
    return alpha * std::exp(-0.5 * m2);
}

RenderedImage render_forward(const SceneSnapshot &scene, const Camera &cam, const Vec3 &background,
                             const RasterConfig &cfg) {
    cam.validate();
    RenderedImage img = make_image(cam);
    fill_background(img, background);
    if (scene.empty()) {
        return img;
    }

    const PreparedScene prep = prepare(scene, cam, cfg);
    const double cutoff2 = cfg.cutoff_sigma * cfg.cutoff_sigma;
    const int ts = cfg.tile_size;
    const std::size_t tile_count = static_cast<std::size_t>(prep.tiles_x) * prep.tiles_y;
    std::vector<std::uint64_t> pixel_hash(static_cast<std::size_t>(cam.width) * cam.height, 0);
    std::vector<std::uint8_t> stopped(pixel_hash.size(), 0);

    parallel_for(tile_count, cfg.threads, [&](std::size_t tile) {
        const int tx = static_cast<int>(tile % prep.tiles_x);
        const int ty = static_cast<int>(tile / prep.tiles_x);
        const std::uint32_t begin = prep.tile_offsets[tile];
        const std::uint32_t end = prep.tile_offsets[tile + 1];
        const int x_end = std::min((tx + 1) * ts, cam.width);
        const int y_end = std::min((ty + 1) * ts, cam.height);
        for (int y = ty * ts; y < y_end; ++y) {
            for (int x = tx * ts; x < x_end; ++x) {
                const double qx = x + 0.5;
                const double qy = y + 0.5;
                double t = 1.0;
                double cr = 0.0, cg = 0.0, cb = 0.0, wsum = 0.0;
                std::uint32_t count = 0;
                std::uint64_t h = 0;
                bool early = false;
                for (std::uint32_t e = begin; e < end; ++e) {
                    const Splat &s = prep.splats[prep.tile_entries[e]];
                    double a, gauss, dx, dy;
                    if (!splat_alpha(s, qx, qy, cutoff2, a, gauss, dx, dy)) {
                        continue;
                    }
                    const double next_t = t * (1.0 - a);
                    if (next_t < cfg.min_transmittance) {
                        early = true;
                        break;
                    }
                    const double w = a * t;
                    cr += s.r * w;
                    cg += s.g * w;
                    cb += s.b * w;
                    wsum += w;
                    t = next_t;
                    ++count;
                    h = hash_step(h, s.source);
                }
                const std::size_t p = static_cast<std::size_t>(y) * cam.width + x;
                img.rgb.pixels[p * 3 + 0] = cr + t * background.x();
                img.rgb.pixels[p * 3 + 1] = cg + t * background.y();
                img.rgb.pixels[p * 3 + 2] = cb + t * background.z();
                img.alpha[p] = wsum;
                img.transmittance[p] = t;
                img.contributors[p] = count;
                pixel_hash[p] = hash_step(h, count);
                stopped[p] = early ? 1 : 0;
            }
        }
    });

    std::uint64_t fp = 0;
    for (std::size_t p = 0; p < pixel_hash.size(); ++p) {
        fp += mix64(pixel_hash[p] ^ (p * 0x9E3779B97F4A7C15ull));
        img.early_stopped_pixels += stopped[p];
    }
    img.support_fingerprint = fp;
    return img;
}

RenderedImage render_naive_oracle(const SceneSnapshot &scene, const Camera &cam,
                                  const Vec3 &background, const RasterConfig &cfg) {
    cam.validate();
    RenderedImage img = make_image(cam);
    fill_background(img, background);

    struct Candidate {
        std::size_t index;
        ProjectedGaussian pg;
    };
    std::vector<Candidate> candidates;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        if (auto pg = project(scene.positions[i], scene.covariances[i], cam, cfg)) {
            candidates.push_back({i, *pg});
        }
    }

    const double cutoff2 = cfg.cutoff_sigma * cfg.cutoff_sigma;
    struct Hit {
        SortKey key;
        double alpha;
    };
    std::vector<Hit> hits;
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            const Vec2 q = pixel_center(x, y);
            hits.clear();
            for (const auto &c : candidates) {
                const Vec2 d = q - c.pg.mean;
                const double d2 = c.pg.conic(0, 0) * d.x() * d.x() +
                                  2.0 * c.pg.conic(0, 1) * d.x() * d.y() +
                                  c.pg.conic(1, 1) * d.y() * d.y();
                if (d2 > cutoff2) {
                    continue;
                }
                hits.push_back({{c.pg.depth, scene.owner[c.index], scene.local_index[c.index],
                                 static_cast<std::uint32_t>(c.index)},
                                scene.opacities[c.index] * std::exp(-0.5 * d2)});
            }
            std::sort(hits.begin(), hits.end(),
                      [](const Hit &a, const Hit &b) { return key_less(a.key, b.key); });

            Vec3 color = Vec3::Zero();
            double t = 1.0;
            double wsum = 0.0;
            for (const auto &hit : hits) {
                const double w = hit.alpha * t;
                color += w * scene.colors[hit.key.source];
                wsum += w;
                t *= 1.0 - hit.alpha;
            }
            color += t * background;
            const std::size_t p = static_cast<std::size_t>(y) * cam.width + x;
            for (int c = 0; c < 3; ++c) {
                img.rgb.pixels[p * 3 + c] = color[c];
            }
            img.alpha[p] = wsum;
            img.transmittance[p] = t;
            img.contributors[p] = static_cast<std::uint32_t>(hits.size());
        }
    }
    return img;
}

WorldGradients render_backward(const SceneSnapshot &scene, const Camera &cam,
                               const Vec3 &background, const Image &residual,
                               const RasterConfig &cfg) {
    cam.validate();
    if (residual.width != cam.width || residual.height != cam.height ||
        residual.pixels.size() != static_cast<std::size_t>(cam.width) * cam.height * 3) {
        throw ValidationError("render_backward: residual shape does not match the camera");
    }
    WorldGradients grads;
    grads.resize(scene.size());
    if (scene.empty()) {
        return grads;
    }

    const PreparedScene prep = prepare(scene, cam, cfg);
    const double cutoff2 = cfg.cutoff_sigma * cfg.cutoff_sigma;
    const int ts = cfg.tile_size;
    const std::size_t tile_count = static_cast<std::size_t>(prep.tiles_x) * prep.tiles_y;

    // Per tile-entry partial sums: d/d(mean x, mean y, conic a, b, c, opacity, r, g, b).
    constexpr int kPartials = 9;
    std::vector<double> partial(prep.tile_entries.size() * kPartials, 0.0);

    parallel_for(tile_count, cfg.threads, [&](std::size_t tile) {
        const int tx = static_cast<int>(tile % prep.tiles_x);
        const int ty = static_cast<int>(tile / prep.tiles_x);
        const std::uint32_t begin = prep.tile_offsets[tile];
        const std::uint32_t end = prep.tile_offsets[tile + 1];
        if (begin == end) {
            return;
        }
        const int x_end = std::min((tx + 1) * ts, cam.width);
        const int y_end = std::min((ty + 1) * ts, cam.height);
        std::vector<Contribution> list;
        list.reserve(end - begin);
        for (int y = ty * ts; y < y_end; ++y) {
            for (int x = tx * ts; x < x_end; ++x) {
                const double qx = x + 0.5;
                const double qy = y + 0.5;
                const std::size_t p = static_cast<std::size_t>(y) * cam.width + x;
                const double rr = residual.pixels[p * 3 + 0];
                const double rg = residual.pixels[p * 3 + 1];
                const double rb = residual.pixels[p * 3 + 2];
                if (rr == 0.0 && rg == 0.0 && rb == 0.0) {
                    continue;
                }

                list.clear();
                double t = 1.0;
                for (std::uint32_t e = begin; e < end; ++e) {
                    const Splat &s = prep.splats[prep.tile_entries[e]];
                    double a, gauss, dx, dy;
                    if (!splat_alpha(s, qx, qy, cutoff2, a, gauss, dx, dy)) {
                        continue;
                    }
                    const double next_t = t * (1.0 - a);
                    if (next_t < cfg.min_transmittance) {
                        break;
                    }
                    list.push_back({e, a, gauss, t, dx, dy});
                    t = next_t;
                }

                // Color seen behind the current splat, normalized to the
                // transmittance right after it; starts as the background.
                double br = background.x(), bg = background.y(), bb = background.z();
                for (auto it = list.rbegin(); it != list.rend(); ++it) {
                    const Splat &s = prep.splats[prep.tile_entries[it->entry]];
                    const double a = it->alpha;
                    const double w = a * it->transmittance;
                    double *out = &partial[static_cast<std::size_t>(it->entry) * kPartials];
                    out[6] += rr * w;
                    out[7] += rg * w;
                    out[8] += rb * w;

                    const double g_alpha = it->transmittance * (rr * (s.r - br) + rg * (s.g - bg) +
                                                                rb * (s.b - bb));
                    out[5] += g_alpha * it->gauss;

                    // alpha = opacity * exp(power), power = -d2 / 2
                    const double g_power = g_alpha * a;
                    const double dx = it->dx;
                    const double dy = it->dy;
                    out[0] += g_power * (s.ca * dx + s.cb * dy);
                    out[1] += g_power * (s.cb * dx + s.cc * dy);
                    out[2] += g_power * (-0.5 * dx * dx);
                    out[3] += g_power * (-dx * dy);
                    out[4] += g_power * (-0.5 * dy * dy);

                    br = s.r * a + (1.0 - a) * br;
                    bg = s.g * a + (1.0 - a) * bg;
                    bb = s.b * a + (1.0 - a) * bb;
                }
            }
        }
    });

    // Fixed-order reduction: tile-major, so the result does not depend on
    // how tiles were scheduled across threads.
    std::vector<double> per_splat(prep.splats.size() * kPartials, 0.0);
    for (std::size_t e = 0; e < prep.tile_entries.size(); ++e) {
        double *dst = &per_splat[static_cast<std::size_t>(prep.tile_entries[e]) * kPartials];
        const double *src = &partial[e * kPartials];
        for (int k = 0; k < kPartials; ++k) {
            dst[k] += src[k];
        }
    }

    parallel_for(prep.splats.size(), cfg.threads, [&](std::size_t si) {
        const double *g = &per_splat[si * kPartials];
        const std::uint32_t src = prep.splats[si].source;
        grads.opacities[src] = g[5];
        grads.colors[src] = Vec3(g[6], g[7], g[8]);

        const CameraSpaceTerms ct = camera_terms(scene.positions[src], scene.covariances[src], cam);
        const Mat2 conic = Mat2{{prep.splats[si].ca, prep.splats[si].cb},
                                {prep.splats[si].cb, prep.splats[si].cc}};
        Mat2 g_conic;
        g_conic << g[2], 0.5 * g[3], 0.5 * g[3], g[4];
        const Mat2 g_cov2 = -conic * g_conic * conic;

        const Mat3 g_cov_cam = ct.jac.transpose() * g_cov2 * ct.jac;
        const Eigen::Matrix<double, 2, 3> g_jac = 2.0 * g_cov2 * ct.jac * ct.cov_cam;

        const double x = ct.t.x(), y = ct.t.y(), z = ct.t.z();
        const double iz = 1.0 / z, iz2 = iz * iz, iz3 = iz2 * iz;
        Vec3 g_t;
        g_t.x() = g[0] * cam.fx * iz + g_jac(0, 2) * (-cam.fx * iz2);
        g_t.y() = g[1] * cam.fy * iz + g_jac(1, 2) * (-cam.fy * iz2);
        g_t.z() = g[0] * (-cam.fx * x * iz2) + g[1] * (-cam.fy * y * iz2) +
                  g_jac(0, 0) * (-cam.fx * iz2) + g_jac(0, 2) * (2.0 * cam.fx * x * iz3) +
                  g_jac(1, 1) * (-cam.fy * iz2) + g_jac(1, 2) * (2.0 * cam.fy * y * iz3);

        grads.positions[src] = cam.rotation.transpose() * g_t;
        grads.covariances[src] = cam.rotation.transpose() * g_cov_cam * cam.rotation;
    });
    return grads;
}

std::vector<InstanceGradients> render_backward(std::span<const Instance> instances,
                                               const Camera &cam, const Vec3 &background,
                                               const Image &residual, const RasterConfig &cfg) {
    const SceneSnapshot snap = assemble_scene(instances);
    const WorldGradients world = render_backward(snap, cam, background, residual, cfg);
    return backprop_to_instances(instances, world);
}

} // namespace layoutsplat
