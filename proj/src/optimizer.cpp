// Copyright 2026 The layoutsplat Authors
// SPDX-License-Identifier: Apache-2.0

#include "layoutsplat/optimizer.hpp"

#include "layoutsplat/errors.hpp"
#include "layoutsplat/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

namespace layoutsplat {

void OptimizerConfig::validate() const {
    std::vector<std::string> issues;
    if (steps < 1) {
        issues.emplace_back("optimizer.steps must be >= 1");
    }
    for (const double r : {lr.position, lr.opacity, lr.color, lr.scale, lr.rotation,
                           lr.layout_center, lr.layout_scale, lr.layout_yaw, lr.layout_opacity}) {
        if (!std::isfinite(r) || r < 0.0) {
            issues.emplace_back("learning rates must be finite and >= 0");
            break;
        }
    }
    if (instance_cameras_per_step < 1 || scene_cameras_per_step < 1) {
        issues.emplace_back("cameras per step must be >= 1");
    }
    if (!(min_scale_factor > 0.0 && min_scale_factor <= max_scale_factor)) {
        issues.emplace_back("scale factor clamp range is invalid");
    }
    if (!issues.empty()) {
        throw ValidationError(std::move(issues));
    }
    weights.validate();
}

std::vector<InstanceLayout> SceneState::layouts() const {
    std::vector<InstanceLayout> out;
    out.reserve(instances.size());
    for (const auto &inst : instances) {
        out.push_back(inst.layout);
    }
    return out;
}

std::size_t SceneState::index_of(const std::string &id) const {
    for (std::size_t i = 0; i < instances.size(); ++i) {
        if (instances[i].layout.id == id) {
            return i;
        }
    }
    throw NotFoundError("unknown instance '" + id + "'");
}

bool SceneState::contains(const std::string &id) const {
    return std::any_of(instances.begin(), instances.end(),
                       [&](const Instance &inst) { return inst.layout.id == id; });
}

SceneState init_scene(std::string scene_prompt, const std::vector<InstanceLayout> &layouts,
                      const SurfaceSamplingConfig &sampling, std::uint64_t seed) {
    SceneState state;
    state.scene_prompt = std::move(scene_prompt);
    state.seed = seed;
    for (const auto &layout : layouts) {
        add_instance(state, layout, sampling);
    }
    return state;
}

void add_instance(SceneState &state, InstanceLayout layout, const SurfaceSamplingConfig &sampling) {
    layout.validate();
    if (state.contains(layout.id)) {
        throw ValidationError("duplicate instance id '" + layout.id + "'");
    }
    InstanceGaussians g = init_instance(layout, sampling, instance_seed(state.seed, layout.id));
    state.instances.push_back({std::move(layout), std::move(g)});
    state.moments.emplace_back();
}

void remove_instance(SceneState &state, const std::string &id) {
    const std::size_t i = state.index_of(id);
    state.instances.erase(state.instances.begin() + static_cast<std::ptrdiff_t>(i));
    state.moments.erase(state.moments.begin() + static_cast<std::ptrdiff_t>(i));
}

std::vector<int> select_views(std::uint64_t seed, std::uint64_t step, const std::string &scope,
                              int ring_size, int count) {
    const int c = std::clamp(count, 1, ring_size);
    Philox4x32 rng(seed, mix64(step ^ fnv1a64(scope)));
    const int offset = static_cast<int>(rng.next_u32() % static_cast<std::uint32_t>(ring_size));
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(c));
    for (int j = 0; j < c; ++j) {
        out.push_back((offset + (j * ring_size) / c) % ring_size);
    }
    return out;
}

namespace {

bool is_active(const StepOptions &opts, std::size_t i) {
    return opts.active.empty() || (i < opts.active.size() && opts.active[i]);
}

double half_sq_norm(const Image &img) {
    double s = 0.0;
    for (const double v : img.pixels) {
        s += v * v;
    }
    return 0.5 * s;
}

struct PhaseResult {
    double value = 0.0;
    std::vector<InstanceGradients> grads;
};

/// Renders `instances` from each camera, asks the provider for a residual and
/// accumulates mean over cameras of w * <residual, dI/dtheta>.
PhaseResult guided_phase(std::span<const Instance> instances, const std::vector<Camera> &cams,
                         const std::vector<ViewKey> &views, const std::string &prompt,
                         const GuidanceProvider &provider, double guidance_scale, bool conditioned,
                         const StepContext &ctx, double eta) {
    PhaseResult out;
    out.grads.reserve(instances.size());
    for (const auto &inst : instances) {
        out.grads.emplace_back(inst.gaussians.size());
    }
    const SceneSnapshot snap = assemble_scene(instances);
    const std::vector<InstanceLayout> layouts = [&] {
        std::vector<InstanceLayout> l;
        for (const auto &inst : instances) {
            l.push_back(inst.layout);
        }
        return l;
    }();
    const double inv_cams = 1.0 / static_cast<double>(cams.size());

    for (std::size_t c = 0; c < cams.size(); ++c) {
        const RenderedImage img = render_forward(snap, cams[c], ctx.background, ctx.raster);
        std::optional<Image> condition;
        if (conditioned) {
            condition = render_layout_condition(layouts, cams[c]);
        }
        GuidanceRequest req;
        req.image = &img.rgb;
        req.camera = cams[c];
        req.view = views[c];
        req.prompt = prompt;
        req.condition = condition ? &*condition : nullptr;
        req.timestep = eta;
        req.guidance_scale = guidance_scale;
        GuidanceResidual res = provider.provide(req, ctx.guidance);

        out.value += inv_cams * res.weight * half_sq_norm(res.residual);
        const double scale = res.weight * inv_cams;
        for (double &v : res.residual.pixels) {
            v *= scale;
        }
        const WorldGradients world =
            render_backward(snap, cams[c], ctx.background, res.residual, ctx.raster);
        const auto chained = backprop_to_instances(instances, world);
        for (std::size_t i = 0; i < chained.size(); ++i) {
            out.grads[i].add(chained[i], 1.0);
        }
    }
    return out;
}

void adam_update(std::span<double> param, std::span<const double> grad, AdamMoments &mom,
                 double lr, const OptimizerConfig &cfg) {
    if (mom.m.size() != param.size()) {
        mom.m.assign(param.size(), 0.0);
        mom.v.assign(param.size(), 0.0);
        mom.t = 0;
    }
    ++mom.t;
    const double b1 = cfg.adam_beta1;
    const double b2 = cfg.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(mom.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(mom.t));
    for (std::size_t k = 0; k < param.size(); ++k) {
        const double g = grad[k];
        mom.m[k] = b1 * mom.m[k] + (1.0 - b1) * g;
        mom.v[k] = b2 * mom.v[k] + (1.0 - b2) * g * g;
        const double m_hat = mom.m[k] / c1;
        const double v_hat = mom.v[k] / c2;
        param[k] -= lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    }
}

} // namespace

ObjectiveEvaluation evaluate_objective(const SceneState &state, const OptimizerConfig &cfg,
                                       const StepContext &ctx, double eta,
                                       const StepOptions &opts) {
    const std::size_t n = state.instances.size();
    const LossWeights &w = cfg.weights;
    ObjectiveEvaluation ev;
    ev.report.eta = eta;
    ev.report.sds_instance.assign(n, 0.0);
    ev.report.layout.assign(n, 0.0);
    ev.report.refine.assign(n, 0.0);
    ev.gradients.reserve(n);
    for (const auto &inst : state.instances) {
        ev.gradients.emplace_back(inst.gaussians.size());
    }
    if (n == 0) {
        return ev;
    }

    // (a) instance-level guidance: Gaussian parameters of each instance.
    if (w.instance_sds > 0.0 && opts.update_gaussians) {
        if (!ctx.instance_provider) {
            throw ValidationError("no instance guidance provider configured");
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (!is_active(opts, i)) {
                continue;
            }
            const auto &layout = state.instances[i].layout;
            const auto slots = select_views(state.seed, state.step, layout.id,
                                            ctx.guidance.instance_views, cfg.instance_cameras_per_step);
            std::vector<Camera> cams;
            std::vector<ViewKey> views;
            for (const int k : slots) {
                ViewKey key{layout.id, k};
                const auto pinned = ctx.fixed_cameras.find(key);
                cams.push_back(pinned != ctx.fixed_cameras.end()
                                   ? pinned->second
                                   : sample_instance_camera(layout, k, ctx.guidance.instance_views,
                                                            ctx.guidance.rig));
                views.push_back(std::move(key));
            }
            const PhaseResult phase = guided_phase(
                std::span<const Instance>(&state.instances[i], 1), cams, views, layout.prompt,
                *ctx.instance_provider, ctx.guidance.instance_guidance_scale, false, ctx, eta);
            ev.report.sds_instance[i] = phase.value;
            ev.gradients[i].add_gaussians(phase.grads[0], w.instance_sds);
        }
    }

    // (b) scene-level guidance: Gaussians through beta4, layout poses through beta3.
    bool any_learnable = false;
    for (std::size_t i = 0; i < n; ++i) {
        any_learnable |= is_active(opts, i) && state.instances[i].layout.learnable.any();
    }
    const bool scene_to_gaussians = w.global > 0.0 && opts.update_gaussians;
    const bool scene_to_layouts = w.refine > 0.0 && opts.update_layouts && any_learnable;
    if (scene_to_gaussians || scene_to_layouts) {
        if (!ctx.scene_provider) {
            throw ValidationError("no scene guidance provider configured");
        }
        const auto layouts = state.layouts();
        const auto slots = select_views(state.seed, state.step, kSceneScope,
                                        ctx.guidance.scene_views, cfg.scene_cameras_per_step);
        std::vector<Camera> cams;
        std::vector<ViewKey> views;
        for (const int k : slots) {
            ViewKey key{kSceneScope, k};
            const auto pinned = ctx.fixed_cameras.find(key);
            cams.push_back(pinned != ctx.fixed_cameras.end()
                               ? pinned->second
                               : sample_scene_camera(scene_bounds(layouts), k,
                                                     ctx.guidance.scene_views, ctx.guidance.rig));
            views.push_back(std::move(key));
        }
        const PhaseResult phase =
            guided_phase(state.instances, cams, views, state.scene_prompt, *ctx.scene_provider,
                         ctx.guidance.scene_guidance_scale, true, ctx, eta);
        ev.report.global = phase.value;
        for (std::size_t i = 0; i < n; ++i) {
            if (!is_active(opts, i)) {
                continue;
            }
            if (scene_to_gaussians) {
                ev.gradients[i].add_gaussians(phase.grads[i], w.global);
            }
            const LearnableFlags &flags = state.instances[i].layout.learnable;
            if (scene_to_layouts && flags.any()) {
                ev.report.refine[i] = phase.value;
                LayoutGradients lg = phase.grads[i].layout;
                if (!flags.center) {
                    lg.center.setZero();
                }
                if (!flags.scale_factor) {
                    lg.scale_factor = 0.0;
                }
                if (!flags.yaw) {
                    lg.yaw = 0.0;
                }
                if (!flags.opacity) {
                    lg.opacity_gain = 0.0;
                }
                ev.gradients[i].add_layout(lg, w.refine);
            }
        }
    }

    // (c) analytic layout containment and flatness terms.
    for (std::size_t i = 0; i < n; ++i) {
        const auto &inst = state.instances[i];
        const bool grad_on = is_active(opts, i) && opts.update_gaussians;
        ev.report.layout[i] =
            layout_loss(inst.gaussians, inst.layout, ev.gradients[i], grad_on ? w.layout : 0.0);
        ev.report.reg += flatness_regularizer(inst.gaussians, inst.layout, ev.gradients[i],
                                              grad_on ? w.regularizer : 0.0);
    }

    ev.report.total = total_loss(ev.report, w);
    return ev;
}

LossReport step(SceneState &state, const OptimizerConfig &cfg, const StepContext &ctx, double eta,
                const StepOptions &opts) {
    ObjectiveEvaluation ev = evaluate_objective(state, cfg, ctx, eta, opts);
    for (std::size_t i = 0; i < ev.gradients.size(); ++i) {
        if (!ev.gradients[i].all_finite()) {
            throw DivergenceError("non-finite gradient for instance '" +
                                  state.instances[i].layout.id + "' at step " +
                                  std::to_string(state.step));
        }
    }

    for (std::size_t i = 0; i < state.instances.size(); ++i) {
        if (!is_active(opts, i)) {
            continue;
        }
        auto &inst = state.instances[i];
        auto &mom = state.moments[i];
        auto &grad = ev.gradients[i];
        if (opts.update_gaussians) {
            auto &g = inst.gaussians;
            adam_update(flat(g.positions), flat(grad.positions), mom.position, cfg.lr.position, cfg);
            adam_update(flat(g.rotations), flat(grad.rotations), mom.rotation, cfg.lr.rotation, cfg);
            adam_update(flat(g.scales_raw), flat(grad.scales), mom.scale, cfg.lr.scale, cfg);
            adam_update(flat(g.opacity_raw), flat(grad.opacity), mom.opacity, cfg.lr.opacity, cfg);
            adam_update(flat(g.colors_raw), flat(grad.colors), mom.color, cfg.lr.color, cfg);
            for (auto &q : g.rotations) {
                q.normalize();
            }
        }
        const LearnableFlags &flags = inst.layout.learnable;
        if (opts.update_layouts && flags.any()) {
            auto &layout = inst.layout;
            if (flags.center) {
                adam_update({layout.center.data(), 3}, {grad.layout.center.data(), 3}, mom.center,
                            cfg.lr.layout_center, cfg);
            }
            if (flags.scale_factor) {
                adam_update({&layout.scale_factor, 1}, {&grad.layout.scale_factor, 1},
                            mom.scale_factor, cfg.lr.layout_scale, cfg);
                layout.scale_factor =
                    std::clamp(layout.scale_factor, cfg.min_scale_factor, cfg.max_scale_factor);
            }
            if (flags.yaw) {
                adam_update({&layout.yaw, 1}, {&grad.layout.yaw, 1}, mom.yaw, cfg.lr.layout_yaw, cfg);
                layout.yaw = wrap_angle(layout.yaw);
            }
            if (flags.opacity) {
                adam_update({&layout.opacity_gain, 1}, {&grad.layout.opacity_gain, 1},
                            mom.opacity_gain, cfg.lr.layout_opacity, cfg);
                layout.opacity_gain = std::clamp(layout.opacity_gain, 1e-3, 1.0);
            }
        }
    }
    ++state.step;
    return ev.report;
}

LossReport refine_layouts(SceneState &state, const OptimizerConfig &cfg, const StepContext &ctx,
                          double eta) {
    const bool any = std::any_of(state.instances.begin(), state.instances.end(),
                                 [](const Instance &inst) { return inst.layout.learnable.any(); });
    if (!any) {
        throw ValidationError("layout refinement needs at least one learnable layout");
    }
    StepOptions opts;
    opts.update_gaussians = false;
    opts.update_layouts = true;
    return step(state, cfg, ctx, eta, opts);
}

std::string OptimizationTrace::to_csv() const {
    std::ostringstream out;
    out << std::setprecision(17);
    out << "step,eta,total,global,reg";
    for (const auto &id : instance_ids) {
        out << ",sds_" << id << ",layout_" << id << ",refine_" << id;
    }
    for (const auto &id : instance_ids) {
        out << ',' << id << "_x," << id << "_y," << id << "_z," << id << "_k," << id << "_yaw";
    }
    out << '\n';
    for (const auto &row : rows) {
        const auto &r = row.report;
        out << row.step << ',' << r.eta << ',' << r.total << ',' << r.global << ',' << r.reg;
        for (std::size_t i = 0; i < instance_ids.size(); ++i) {
            out << ',' << (i < r.sds_instance.size() ? r.sds_instance[i] : 0.0) << ','
                << (i < r.layout.size() ? r.layout[i] : 0.0) << ','
                << (i < r.refine.size() ? r.refine[i] : 0.0);
        }
        for (std::size_t i = 0; i < instance_ids.size(); ++i) {
            if (i < row.poses.size()) {
                const auto &p = row.poses[i];
                out << ',' << p.center.x() << ',' << p.center.y() << ',' << p.center.z() << ','
                    << p.scale_factor << ',' << p.yaw;
            } else {
                out << ",,,,,";
            }
        }
        out << '\n';
    }
    return out.str();
}

namespace {

TraceRow make_row(const SceneState &state, LossReport report, double seconds) {
    TraceRow row;
    row.step = state.step;
    row.report = std::move(report);
    row.seconds = seconds;
    for (const auto &inst : state.instances) {
        row.poses.push_back({inst.layout.center, inst.layout.scale_factor, inst.layout.yaw});
    }
    return row;
}

std::vector<std::string> ids_of(const SceneState &state) {
    std::vector<std::string> ids;
    for (const auto &inst : state.instances) {
        ids.push_back(inst.layout.id);
    }
    return ids;
}

} // namespace

OptimizationTrace run(SceneState &state, const OptimizerConfig &cfg, const StepContext &ctx,
                      const RunOptions &opts) {
    cfg.validate();
    ctx.guidance.validate();
    OptimizationTrace trace;
    trace.instance_ids = ids_of(state);
    std::uint64_t executed = 0;
    while (state.step < cfg.steps && (!opts.stop_after || executed < *opts.stop_after)) {
        const auto t0 = std::chrono::steady_clock::now();
        const double eta = timestep_at(state.step, cfg.steps, ctx.guidance);
        LossReport report = step(state, cfg, ctx, eta);
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        ++executed;
        if (opts.on_step && opts.callback_every > 0 && state.step % opts.callback_every == 0) {
            opts.on_step(state, report);
        }
        trace.rows.push_back(make_row(state, std::move(report), secs));
    }
    return trace;
}

OptimizationTrace local_reoptimize(SceneState &state, const std::vector<std::string> &edited_ids,
                                   const OptimizerConfig &cfg, const StepContext &ctx,
                                   std::uint64_t steps) {
    if (edited_ids.empty()) {
        throw ValidationError("local re-optimization needs at least one edited instance");
    }
    cfg.validate();
    StepOptions opts;
    opts.active.assign(state.instances.size(), false);
    for (const auto &id : edited_ids) {
        opts.active[state.index_of(id)] = true;
    }
    OptimizationTrace trace;
    trace.instance_ids = ids_of(state);
    for (std::uint64_t s = 0; s < steps; ++s) {
        const auto t0 = std::chrono::steady_clock::now();
        const double eta = timestep_at(s, steps, ctx.guidance);
        LossReport report = step(state, cfg, ctx, eta, opts);
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        trace.rows.push_back(make_row(state, std::move(report), secs));
    }
    return trace;
}

} // namespace layoutsplat
