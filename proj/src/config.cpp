// Copyright 2026 The layoutsplat Authors
// SPDX-License-Identifier: Apache-2.0

#include "layoutsplat/config.hpp"

#include "json_support.hpp"
#include "layoutsplat/errors.hpp"

#include <limits>

namespace layoutsplat {

using detail::IssueSink;
using detail::Json;

namespace {

template <typename T>
void read_into(const Json &obj, const char *key, const std::string &path, IssueSink &issues, T &out) {
    if (auto v = detail::get_number(obj, key, path, issues, false)) {
        if constexpr (std::is_integral_v<T>) {
            const double lo = static_cast<double>(std::numeric_limits<T>::lowest());
            const double hi = static_cast<double>(std::numeric_limits<T>::max());
            if (*v != std::floor(*v) || *v < lo || *v > hi) {
                issues.add(detail::join_path(path, key), "must be an integer in range");
                return;
            }
            out = static_cast<T>(*v);
        } else {
            out = *v;
        }
    }
}

const Json *object_at(const Json &obj, const char *key, const std::string &path, IssueSink &issues) {
    const auto it = obj.find(key);
    if (it == obj.end()) {
        return nullptr;
    }
    if (!it->is_object()) {
        issues.add(detail::join_path(path, key), "must be an object");
        return nullptr;
    }
    return &*it;
}

/// Runs a struct's own validate() and folds its issues into the sink.
template <typename F>
void collect(IssueSink &issues, const std::string &path, F &&check) {
    try {
        check();
    } catch (const ValidationError &e) {
        for (const auto &issue : e.issues()) {
            issues.add(path, issue);
        }
    }
}

std::filesystem::path resolve(const std::filesystem::path &base, const std::string &p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : (base / path).lexically_normal();
}

ProviderSpec parse_provider(const Json &obj, const std::string &path, const std::filesystem::path &base,
                            IssueSink &issues) {
    ProviderSpec spec;
    detail::reject_unknown_keys(obj, path,
                                {"kind", "color", "cells", "color_a", "color_b", "targets_dir",
                                 "reference_checkpoint"},
                                issues);
    if (auto kind = detail::get_string(obj, "kind", path, issues, true)) {
        spec.kind = *kind;
        if (spec.kind != "flat" && spec.kind != "checker" && spec.kind != "photometric") {
            issues.add(detail::join_path(path, "kind"),
                       "must be one of flat, checker, photometric (got '" + spec.kind + "')");
        }
    }
    if (auto c = detail::get_vec3(obj, "color", path, issues, false)) {
        spec.color = *c;
    }
    read_into(obj, "cells", path, issues, spec.cells);
    if (spec.cells < 1) {
        issues.add(detail::join_path(path, "cells"), "must be >= 1");
    }
    if (auto c = detail::get_vec3(obj, "color_a", path, issues, false)) {
        spec.color_a = *c;
    }
    if (auto c = detail::get_vec3(obj, "color_b", path, issues, false)) {
        spec.color_b = *c;
    }
    if (auto d = detail::get_string(obj, "targets_dir", path, issues, false)) {
        spec.targets_dir = resolve(base, *d);
    }
    if (auto r = detail::get_string(obj, "reference_checkpoint", path, issues, false)) {
        spec.reference_checkpoint = resolve(base, *r);
    }
    if (spec.kind == "photometric" && spec.targets_dir.empty() == spec.reference_checkpoint.empty()) {
        issues.add(path, "photometric guidance needs exactly one of targets_dir or reference_checkpoint");
    }
    return spec;
}

Json provider_to_json(const ProviderSpec &spec) {
    Json j;
    j["kind"] = spec.kind;
    if (spec.kind == "flat") {
        j["color"] = detail::vec3_to_json(spec.color);
    } else if (spec.kind == "checker") {
        j["cells"] = spec.cells;
        j["color_a"] = detail::vec3_to_json(spec.color_a);
        j["color_b"] = detail::vec3_to_json(spec.color_b);
    } else {
        if (!spec.targets_dir.empty()) {
            j["targets_dir"] = std::filesystem::absolute(spec.targets_dir).string();
        }
        if (!spec.reference_checkpoint.empty()) {
            j["reference_checkpoint"] = std::filesystem::absolute(spec.reference_checkpoint).string();
        }
    }
    return j;
}

} // namespace

RunConfig parse_run_config(std::string_view json_text, const std::filesystem::path &base_dir,
                           bool load_layout) {
    const Json root = detail::parse_json(json_text, "run config");
    IssueSink issues;
    if (!root.is_object()) {
        throw ValidationError("run config must be a JSON object");
    }
    RunConfig cfg;
    detail::reject_unknown_keys(root, "",
                                {"layout", "output_dir", "seed", "sampling", "guidance", "optimizer",
                                 "render", "checkpoint_every"},
                                issues);
    const auto layout = detail::get_string(root, "layout", "", issues, true);
    if (auto out = detail::get_string(root, "output_dir", "", issues, false)) {
        cfg.output_dir = resolve(base_dir, *out);
    } else {
        cfg.output_dir = resolve(base_dir, "out");
    }
    read_into(root, "seed", "", issues, cfg.seed);
    read_into(root, "checkpoint_every", "", issues, cfg.checkpoint_every);

    if (const Json *s = object_at(root, "sampling", "", issues)) {
        detail::reject_unknown_keys(*s, "sampling", {"mu", "sigma", "particle_count"}, issues);
        read_into(*s, "mu", "sampling", issues, cfg.sampling.mu);
        read_into(*s, "sigma", "sampling", issues, cfg.sampling.sigma);
        read_into(*s, "particle_count", "sampling", issues, cfg.sampling.particle_count);
    }
    collect(issues, "sampling", [&] { cfg.sampling.validate(); });

    if (const Json *g = object_at(root, "guidance", "", issues)) {
        const std::string p = "guidance";
        detail::reject_unknown_keys(*g, p,
                                    {"instance", "scene", "instance_guidance_scale",
                                     "scene_guidance_scale", "eta_start", "eta_end", "weighting",
                                     "instance_views", "scene_views", "camera"},
                                    issues);
        if (const Json *inst = object_at(*g, "instance", p, issues)) {
            cfg.instance_provider = parse_provider(*inst, p + ".instance", base_dir, issues);
        }
        if (const Json *scene = object_at(*g, "scene", p, issues)) {
            cfg.scene_provider = parse_provider(*scene, p + ".scene", base_dir, issues);
        }
        auto &gc = cfg.guidance;
        read_into(*g, "instance_guidance_scale", p, issues, gc.instance_guidance_scale);
        read_into(*g, "scene_guidance_scale", p, issues, gc.scene_guidance_scale);
        read_into(*g, "eta_start", p, issues, gc.eta_start);
        read_into(*g, "eta_end", p, issues, gc.eta_end);
        read_into(*g, "instance_views", p, issues, gc.instance_views);
        read_into(*g, "scene_views", p, issues, gc.scene_views);
        if (auto w = detail::get_string(*g, "weighting", p, issues, false)) {
            if (*w == "constant") {
                gc.weighting = WeightSchedule::Constant;
            } else if (*w == "eta_squared") {
                gc.weighting = WeightSchedule::EtaSquared;
            } else {
                issues.add(p + ".weighting", "must be 'constant' or 'eta_squared'");
            }
        }
        if (const Json *cam = object_at(*g, "camera", p, issues)) {
            const std::string cp = p + ".camera";
            detail::reject_unknown_keys(*cam, cp,
                                        {"width", "height", "fov_y_degrees", "elevation_degrees",
                                         "instance_radius_scale", "scene_radius_scale"},
                                        issues);
            read_into(*cam, "width", cp, issues, gc.rig.width);
            read_into(*cam, "height", cp, issues, gc.rig.height);
            read_into(*cam, "fov_y_degrees", cp, issues, gc.rig.fov_y_degrees);
            read_into(*cam, "elevation_degrees", cp, issues, gc.rig.elevation_degrees);
            read_into(*cam, "instance_radius_scale", cp, issues, gc.rig.instance_radius_scale);
            read_into(*cam, "scene_radius_scale", cp, issues, gc.rig.scene_radius_scale);
        }
    }
    collect(issues, "guidance", [&] { cfg.guidance.validate(); });

    if (const Json *o = object_at(root, "optimizer", "", issues)) {
        const std::string p = "optimizer";
        detail::reject_unknown_keys(*o, p,
                                    {"steps", "learning_rates", "weights", "instance_cameras_per_step",
                                     "scene_cameras_per_step", "min_scale_factor", "max_scale_factor"},
                                    issues);
        auto &oc = cfg.optimizer;
        read_into(*o, "steps", p, issues, oc.steps);
        read_into(*o, "instance_cameras_per_step", p, issues, oc.instance_cameras_per_step);
        read_into(*o, "scene_cameras_per_step", p, issues, oc.scene_cameras_per_step);
        read_into(*o, "min_scale_factor", p, issues, oc.min_scale_factor);
        read_into(*o, "max_scale_factor", p, issues, oc.max_scale_factor);
        if (const Json *lr = object_at(*o, "learning_rates", p, issues)) {
            const std::string lp = p + ".learning_rates";
            detail::reject_unknown_keys(*lr, lp,
                                        {"position", "opacity", "color", "scale", "rotation",
                                         "layout_center", "layout_scale", "layout_yaw",
                                         "layout_opacity"},
                                        issues);
            read_into(*lr, "position", lp, issues, oc.lr.position);
            read_into(*lr, "opacity", lp, issues, oc.lr.opacity);
            read_into(*lr, "color", lp, issues, oc.lr.color);
            read_into(*lr, "scale", lp, issues, oc.lr.scale);
            read_into(*lr, "rotation", lp, issues, oc.lr.rotation);
            read_into(*lr, "layout_center", lp, issues, oc.lr.layout_center);
            read_into(*lr, "layout_scale", lp, issues, oc.lr.layout_scale);
            read_into(*lr, "layout_yaw", lp, issues, oc.lr.layout_yaw);
            read_into(*lr, "layout_opacity", lp, issues, oc.lr.layout_opacity);
        }
        if (const Json *w = object_at(*o, "weights", p, issues)) {
            const std::string wp = p + ".weights";
            detail::reject_unknown_keys(*w, wp,
                                        {"instance_sds", "layout", "refine", "global", "regularizer"},
                                        issues);
            read_into(*w, "instance_sds", wp, issues, oc.weights.instance_sds);
            read_into(*w, "layout", wp, issues, oc.weights.layout);
            read_into(*w, "refine", wp, issues, oc.weights.refine);
            read_into(*w, "global", wp, issues, oc.weights.global);
            read_into(*w, "regularizer", wp, issues, oc.weights.regularizer);
        }
    }
    collect(issues, "optimizer", [&] { cfg.optimizer.validate(); });

    if (const Json *r = object_at(root, "render", "", issues)) {
        const std::string p = "render";
        detail::reject_unknown_keys(*r, p, {"background", "threads", "turntable_views"}, issues);
        if (auto bg = detail::get_vec3(*r, "background", p, issues, false)) {
            cfg.background = *bg;
        }
        read_into(*r, "threads", p, issues, cfg.raster.threads);
        read_into(*r, "turntable_views", p, issues, cfg.turntable_views);
        if (cfg.turntable_views < 1) {
            issues.add(p + ".turntable_views", "must be >= 1");
        }
    }
    issues.raise();

    cfg.layout_path = resolve(base_dir, *layout);
    if (!load_layout) {
        return cfg;
    }
    try {
        cfg.layout = parse_layout(read_file(cfg.layout_path));
    } catch (const ValidationError &e) {
        std::vector<std::string> prefixed;
        for (const auto &issue : e.issues()) {
            prefixed.push_back(cfg.layout_path.string() + ": " + issue);
        }
        throw ValidationError(std::move(prefixed));
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path &path) {
    const std::string text = read_file(path);
    return parse_run_config(text, std::filesystem::absolute(path).parent_path());
}

std::string run_config_to_json(const RunConfig &cfg) {
    Json j;
    j["layout"] = std::filesystem::absolute(cfg.layout_path).string();
    j["output_dir"] = std::filesystem::absolute(cfg.output_dir).string();
    j["seed"] = cfg.seed;
    j["checkpoint_every"] = cfg.checkpoint_every;
    j["sampling"] = {{"mu", cfg.sampling.mu},
                     {"sigma", cfg.sampling.sigma},
                     {"particle_count", cfg.sampling.particle_count}};
    const auto &g = cfg.guidance;
    j["guidance"] = {
        {"instance", provider_to_json(cfg.instance_provider)},
        {"scene", provider_to_json(cfg.scene_provider)},
        {"instance_guidance_scale", g.instance_guidance_scale},
        {"scene_guidance_scale", g.scene_guidance_scale},
        {"eta_start", g.eta_start},
        {"eta_end", g.eta_end},
        {"weighting", g.weighting == WeightSchedule::Constant ? "constant" : "eta_squared"},
        {"instance_views", g.instance_views},
        {"scene_views", g.scene_views},
        {"camera",
         {{"width", g.rig.width},
          {"height", g.rig.height},
          {"fov_y_degrees", g.rig.fov_y_degrees},
          {"elevation_degrees", g.rig.elevation_degrees},
          {"instance_radius_scale", g.rig.instance_radius_scale},
          {"scene_radius_scale", g.rig.scene_radius_scale}}}};
    const auto &o = cfg.optimizer;
    j["optimizer"] = {{"steps", o.steps},
                      {"learning_rates",
                       {{"position", o.lr.position},
                        {"opacity", o.lr.opacity},
                        {"color", o.lr.color},
                        {"scale", o.lr.scale},
                        {"rotation", o.lr.rotation},
                        {"layout_center", o.lr.layout_center},
                        {"layout_scale", o.lr.layout_scale},
                        {"layout_yaw", o.lr.layout_yaw},
                        {"layout_opacity", o.lr.layout_opacity}}},
                      {"weights",
                       {{"instance_sds", o.weights.instance_sds},
                        {"layout", o.weights.layout},
                        {"refine", o.weights.refine},
                        {"global", o.weights.global},
                        {"regularizer", o.weights.regularizer}}},
                      {"instance_cameras_per_step", o.instance_cameras_per_step},
                      {"scene_cameras_per_step", o.scene_cameras_per_step},
                      {"min_scale_factor", o.min_scale_factor},
                      {"max_scale_factor", o.max_scale_factor}};
    j["render"] = {{"background", detail::vec3_to_json(cfg.background)},
                   {"threads", cfg.raster.threads},
                   {"turntable_views", cfg.turntable_views}};
    return j.dump(2) + "\n";
}

void add_reference_targets(const SceneState &reference, const GuidanceConfig &guidance,
                           const RasterConfig &raster, const Vec3 &background,
                           PhotometricTarget &provider, StepContext &ctx) {
    if (reference.instances.empty()) {
        throw EmptySceneError("reference scene has no instances");
    }
    for (const auto &inst : reference.instances) {
        const SceneSnapshot snap = assemble_scene(std::span<const Instance>(&inst, 1));
        for (int k = 0; k < guidance.instance_views; ++k) {
            const Camera cam = sample_instance_camera(inst.layout, k, guidance.instance_views, guidance.rig);
            const ViewKey key{inst.layout.id, k};
            provider.add_target(key, render_forward(snap, cam, background, raster).rgb, inst.layout.prompt);
            ctx.fixed_cameras[key] = cam;
        }
    }
    const SceneSnapshot snap = assemble_scene(reference.instances);
    const auto layouts = reference.layouts();
    const SceneBounds bounds = scene_bounds(layouts);
    for (int k = 0; k < guidance.scene_views; ++k) {
        const Camera cam = sample_scene_camera(bounds, k, guidance.scene_views, guidance.rig);
        const ViewKey key{kSceneScope, k};
        provider.add_target(key, render_forward(snap, cam, background, raster).rgb, reference.scene_prompt);
        ctx.fixed_cameras[key] = cam;
    }
}

namespace {

std::shared_ptr<const GuidanceProvider> build_provider(const ProviderSpec &spec, const RunConfig &cfg,
                                                       StepContext &ctx) {
    if (spec.kind == "flat") {
        return std::make_shared<FlatColor>(spec.color);
    }
    if (spec.kind == "checker") {
        return std::make_shared<CheckerTexture>(spec.cells, spec.color_a, spec.color_b);
    }
    auto provider = std::make_shared<PhotometricTarget>();
    if (!spec.reference_checkpoint.empty()) {
        const SceneCheckpoint ref = load_checkpoint(read_file(spec.reference_checkpoint));
        add_reference_targets(ref.state, cfg.guidance, cfg.raster, cfg.background, *provider, ctx);
        return provider;
    }
    // Target folders: cameras come from the layout document as written.
    const auto &layouts = cfg.layout.instances;
    const auto load = [&](const ViewKey &key, const Camera &cam, const std::string &prompt) {
        const auto file = spec.targets_dir / (key.scope + "_" + std::to_string(key.index) + ".ppm");
        if (!std::filesystem::exists(file)) {
            return;
        }
        Image img = read_image(file);
        if (img.width != cam.width || img.height != cam.height) {
            throw ValidationError("target '" + file.string() + "' does not match the render size");
        }
        provider->add_target(key, std::move(img), prompt);
        ctx.fixed_cameras[key] = cam;
    };
    for (const auto &layout : layouts) {
        for (int k = 0; k < cfg.guidance.instance_views; ++k) {
            load({layout.id, k},
                 sample_instance_camera(layout, k, cfg.guidance.instance_views, cfg.guidance.rig),
                 layout.prompt);
        }
    }
    if (!layouts.empty()) {
        const SceneBounds bounds = scene_bounds(layouts);
        for (int k = 0; k < cfg.guidance.scene_views; ++k) {
            load({kSceneScope, k},
                 sample_scene_camera(bounds, k, cfg.guidance.scene_views, cfg.guidance.rig),
                 cfg.layout.scene_prompt);
        }
    }
    if (provider->target_count() == 0) {
        throw MissingAssetError("no target images found in '" + spec.targets_dir.string() + "'");
    }
    return provider;
}

} // namespace

StepContext make_step_context(const RunConfig &cfg) {
    StepContext ctx;
    ctx.guidance = cfg.guidance;
    ctx.raster = cfg.raster;
    ctx.background = cfg.background;
    ctx.instance_provider = build_provider(cfg.instance_provider, cfg, ctx);
    if (cfg.scene_provider == cfg.instance_provider && cfg.instance_provider.kind == "photometric") {
        ctx.scene_provider = ctx.instance_provider;
    } else {
        ctx.scene_provider = build_provider(cfg.scene_provider, cfg, ctx);
    }
    return ctx;
}

} // namespace layoutsplat
