// Copyright 2026 The layoutsplat Authors
// SPDX-License-Identifier: Apache-2.0

#include "layoutsplat/cli.hpp"

#include "layoutsplat/config.hpp"
#include "layoutsplat/errors.hpp"
#include "layoutsplat/scene_io.hpp"
#include "layoutsplat/service.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <iomanip>
#include <sstream>
#include <thread>

namespace layoutsplat {

int exit_code_for(const std::exception &e) {
    if (dynamic_cast<const ValidationError *>(&e) || dynamic_cast<const EmptySceneError *>(&e)) {
        return kExitValidation;
    }
    if (dynamic_cast<const IoError *>(&e) || dynamic_cast<const ChecksumError *>(&e) ||
        dynamic_cast<const VersionError *>(&e) || dynamic_cast<const MissingAssetError *>(&e)) {
        return kExitIo;
    }
    if (dynamic_cast<const EnvironmentError *>(&e)) {
        return kExitEnvironment;
    }
    if (dynamic_cast<const DivergenceError *>(&e) || dynamic_cast<const NumericalError *>(&e)) {
        return kExitDivergence;
    }
    return kExitFailure;
}

namespace {

std::atomic<int> g_signal{0};

extern "C" void on_signal(int sig) { g_signal.store(sig); }

struct Options {
    std::string config;
    std::string layout;
    std::string out;
    std::string checkpoint;
    std::optional<std::uint64_t> seed;
    std::optional<std::uint64_t> steps;
    std::optional<int> port;
    double azimuth = 0.0;
    std::optional<double> elevation;
    std::optional<double> radius;
    std::optional<int> width;
    std::optional<int> height;
};

void print_issues(std::ostream &err, const std::exception &e) {
    if (const auto *v = dynamic_cast<const ValidationError *>(&e)) {
        for (const auto &issue : v->issues()) {
            err << "error: " << issue << "\n";
        }
    } else {
        err << "error: " << e.what() << "\n";
    }
}

RunConfig load_config_with_overrides(const Options &opt) {
    RunConfig cfg = load_run_config(opt.config);
    if (!opt.out.empty()) {
        cfg.output_dir = std::filesystem::absolute(opt.out);
    }
    if (opt.seed) {
        cfg.seed = *opt.seed;
    }
    if (opt.steps) {
        cfg.optimizer.steps = *opt.steps;
        cfg.optimizer.validate();
    }
    return cfg;
}

void ensure_dir(const std::filesystem::path &dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) {
        throw IoError("cannot create output directory '" + dir.string() + "'");
    }
}

/// Loads a checkpoint and the run configuration embedded in it.
std::pair<SceneCheckpoint, RunConfig> load_checkpoint_and_config(const std::filesystem::path &path) {
    SceneCheckpoint ckpt = load_checkpoint(read_file(path));
    RunConfig cfg;
    if (!ckpt.config_json.empty()) {
        cfg = parse_run_config(ckpt.config_json, std::filesystem::absolute(path).parent_path(), false);
    }
    return {std::move(ckpt), std::move(cfg)};
}

CameraSpec camera_from_options(const Options &opt, const RunConfig &cfg) {
    CameraSpec spec;
    spec.azimuth_degrees = opt.azimuth;
    spec.elevation_degrees = opt.elevation.value_or(cfg.guidance.rig.elevation_degrees);
    spec.radius = opt.radius;
    spec.width = opt.width.value_or(cfg.guidance.rig.width);
    spec.height = opt.height.value_or(cfg.guidance.rig.height);
    return spec;
}

int cmd_validate(const Options &opt, std::ostream &out) {
    const std::string path = opt.layout;
    const LayoutDocument doc = parse_layout(read_file(path));
    out << path << ": valid (" << doc.instances.size() << " instance"
        << (doc.instances.size() == 1 ? "" : "s") << ")\n";
    return kExitOk;
}

std::string turntable_name(int k) {
    std::ostringstream s;
    s << "turntable_" << std::setw(2) << std::setfill('0') << k << ".ppm";
    return s.str();
}

int cmd_generate(const Options &opt, std::ostream &out, std::ostream &err) {
    const RunConfig cfg = load_config_with_overrides(opt);
    ensure_dir(cfg.output_dir);
    const StepContext ctx = make_step_context(cfg);
    SceneState state = init_scene(cfg.layout.scene_prompt, cfg.layout.instances, cfg.sampling, cfg.seed);
    const std::string config_json = run_config_to_json(cfg);
    const auto checkpoint_path = cfg.output_dir / "checkpoint.lsck";
    const auto save = [&] { write_file(checkpoint_path, save_checkpoint({state, config_json})); };

    OptimizationTrace trace;
    for (const auto &inst : state.instances) {
        trace.instance_ids.push_back(inst.layout.id);
    }
    while (state.step < cfg.optimizer.steps) {
        const auto t0 = std::chrono::steady_clock::now();
        const double eta = timestep_at(state.step, cfg.optimizer.steps, ctx.guidance);
        LossReport report;
        try {
            report = step(state, cfg.optimizer, ctx, eta);
        } catch (const DivergenceError &e) {
            save();
            write_file(cfg.output_dir / "trace.csv", trace.to_csv());
            err << "error: " << e.what() << "\n"
                << "last good checkpoint (step " << state.step << ") kept at " << checkpoint_path.string()
                << "\n";
            return kExitDivergence;
        }
        TraceRow row;
        row.step = state.step;
        row.report = std::move(report);
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        for (const auto &inst : state.instances) {
            row.poses.push_back({inst.layout.center, inst.layout.scale_factor, inst.layout.yaw});
        }
        trace.rows.push_back(std::move(row));
        if (cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0) {
            save();
        }
    }
    save();
    write_file(cfg.output_dir / "trace.csv", trace.to_csv());

    const SceneSnapshot snap = assemble_scene(state.instances);
    const auto layouts = state.layouts();
    for (int k = 0; k < cfg.turntable_views; ++k) {
        CameraSpec spec;
        spec.azimuth_degrees = 360.0 * k / cfg.turntable_views;
        spec.elevation_degrees = cfg.guidance.rig.elevation_degrees;
        spec.width = cfg.guidance.rig.width;
        spec.height = cfg.guidance.rig.height;
        const Camera cam = resolve_camera(spec, layouts, cfg.guidance.rig);
        write_image(render_forward(snap, cam, cfg.background, cfg.raster), cfg.output_dir / turntable_name(k));
    }
    write_file(cfg.output_dir / "scene.ply", export_ply(snap));
    out << "generated " << state.step << " steps into " << cfg.output_dir.string() << "\n";
    return kExitOk;
}

int cmd_render(const Options &opt, std::ostream &out) {
    const auto [ckpt, cfg] = load_checkpoint_and_config(opt.checkpoint);
    if (ckpt.state.instances.empty()) {
        throw EmptySceneError("checkpoint holds no instances");
    }
    const auto layouts = ckpt.state.layouts();
    const Camera cam = resolve_camera(camera_from_options(opt, cfg), layouts, cfg.guidance.rig);
    const RenderedImage img = render_forward(assemble_scene(ckpt.state.instances), cam, cfg.background, cfg.raster);
    const std::filesystem::path path = opt.out.empty() ? "render.ppm" : opt.out;
    write_image(img, path);
    out << "wrote " << path.string() << "\n";
    return kExitOk;
}

int cmd_export(const Options &opt, std::ostream &out) {
    const auto [ckpt, cfg] = load_checkpoint_and_config(opt.checkpoint);
    const std::filesystem::path path = opt.out.empty() ? "scene.ply" : opt.out;
    write_file(path, export_ply(assemble_scene(ckpt.state.instances)));
    out << "wrote " << path.string() << "\n";
    return kExitOk;
}

int cmd_serve(const Options &opt, std::ostream &out) {
    const RunConfig cfg = load_config_with_overrides(opt);
    ensure_dir(cfg.output_dir);
    const StepContext ctx = make_step_context(cfg);
    SceneState state;
    if (!opt.checkpoint.empty()) {
        state = load_checkpoint(read_file(opt.checkpoint)).state;
    } else {
        state = init_scene(cfg.layout.scene_prompt, cfg.layout.instances, cfg.sampling, cfg.seed);
    }
    const std::string config_json = run_config_to_json(cfg);

    Session session(std::move(state), cfg.optimizer, ctx, cfg.sampling);
    EditServer server(session);
    const int port = server.start("127.0.0.1", opt.port.value_or(default_port()));

    g_signal.store(0);
    auto prev_term = std::signal(SIGTERM, on_signal);
    auto prev_int = std::signal(SIGINT, on_signal);
    out << "listening on http://127.0.0.1:" << port << std::endl;
    while (g_signal.load() == 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    std::signal(SIGTERM, prev_term);
    std::signal(SIGINT, prev_int);

    // Flush the latest step-boundary state before tearing anything down.
    session.control({ControlRequest::Action::Stop, 0, {}});
    session.wait_idle();
    const auto checkpoint_path = cfg.output_dir / "checkpoint.lsck";
    write_file(checkpoint_path, save_checkpoint({*session.published().state, config_json}));
    server.stop();
    session.shutdown();
    out << "checkpoint written to " << checkpoint_path.string() << std::endl;
    return kExitOk;
}

} // namespace

int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
    CLI::App app{"layoutsplat: layout-guided compositional Gaussian scene generation"};
    app.name("layoutsplat");
    app.require_subcommand(1);
    Options opt;

    auto *validate = app.add_subcommand("validate", "Check a layout document against the schema");
    validate->add_option("layout,--layout", opt.layout, "Layout JSON file")->required();

    auto *generate = app.add_subcommand("generate", "Initialize, optimize and write all artifacts");
    generate->add_option("--config", opt.config, "Run config JSON")->required();
    generate->add_option("--out", opt.out, "Output directory (overrides the config)");
    generate->add_option("--seed", opt.seed, "Seed (overrides the config)");
    generate->add_option("--steps", opt.steps, "Optimizer steps (overrides the config)");

    auto *render = app.add_subcommand("render", "Render a checkpoint from an orbit camera");
    render->add_option("--checkpoint", opt.checkpoint, "Checkpoint file")->required();
    render->add_option("--out", opt.out, "Output PPM path");
    render->add_option("--azimuth", opt.azimuth, "Azimuth in degrees (default 0)");
    render->add_option("--elevation", opt.elevation, "Elevation in degrees (default: config)");
    render->add_option("--radius", opt.radius, "Orbit radius (default: scene bounding sphere)");
    render->add_option("--width", opt.width, "Image width (default: config)");
    render->add_option("--height", opt.height, "Image height (default: config)");

    auto *exp = app.add_subcommand("export", "Write a checkpoint's Gaussians as PLY");
    exp->add_option("--checkpoint", opt.checkpoint, "Checkpoint file")->required();
    exp->add_option("--out", opt.out, "Output PLY path");

    auto *serve = app.add_subcommand("serve", "Run the HTTP edit service");
    serve->add_option("--config", opt.config, "Run config JSON")->required();
    serve->add_option("--port", opt.port, "Port (default: $LAYOUTSPLAT_PORT or 7334)");
    serve->add_option("--checkpoint", opt.checkpoint, "Resume from this checkpoint");
    serve->add_option("--out", opt.out, "Output directory for the shutdown checkpoint");
    serve->add_option("--seed", opt.seed, "Seed (overrides the config)");
    serve->add_option("--steps", opt.steps, "Default run length (overrides the config)");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (*validate) {
            return cmd_validate(opt, out);
        }
        if (*generate) {
            return cmd_generate(opt, out, err);
        }
        if (*render) {
            return cmd_render(opt, out);
        }
        if (*exp) {
            return cmd_export(opt, out);
        }
        if (*serve) {
            return cmd_serve(opt, out);
        }
    } catch (const std::exception &e) {
        print_issues(err, e);
        return exit_code_for(e);
    }
    return kExitFailure;
}

} // namespace layoutsplat
