// Copyright 2026 The layoutsplat Authors
// SPDX-License-Identifier: Apache-2.0

#include "layoutsplat/service.hpp"

#include "json_support.hpp"
#include "layoutsplat/errors.hpp"
#include "layoutsplat/guidance.hpp"

#include <httplib.h>

#include <algorithm>
#include <bit>
#include <cstdlib>
#include <cstring>

namespace layoutsplat {

using detail::IssueSink;
using detail::Json;

void EditOp::validate() const {
    std::vector<std::string> issues;
    if (kind != Kind::Add && target.empty()) {
        issues.emplace_back("edit needs a target id");
    }
    switch (kind) {
    case Kind::Add:
        try {
            instance.validate();
        } catch (const ValidationError &e) {
            issues.insert(issues.end(), e.issues().begin(), e.issues().end());
        }
        break;
    case Kind::Translate:
        if (!offset.allFinite()) {
            issues.emplace_back("translate offset must be finite");
        }
        break;
    case Kind::Rotate:
        if (!std::isfinite(degrees)) {
            issues.emplace_back("rotate angle must be finite");
        }
        break;
    case Kind::Scale:
        if (!std::isfinite(factor) || factor <= 0.0) {
            issues.emplace_back("scale factor must be finite and > 0");
        }
        break;
    case Kind::Relabel:
        if (prompt.empty()) {
            issues.emplace_back("relabel needs a non-empty prompt");
        }
        break;
    case Kind::Remove:
        break;
    }
    if (!issues.empty()) {
        throw ValidationError(std::move(issues));
    }
}

EditOp parse_edit(std::string_view json_text) {
    const Json root = detail::parse_json(json_text, "edit");
    if (!root.is_object()) {
        throw ValidationError("edit must be a JSON object");
    }
    IssueSink issues;
    EditOp op;
    const auto kind = detail::get_string(root, "op", "", issues, true);
    issues.raise();
    const auto target = [&] {
        if (auto t = detail::get_string(root, "target", "", issues, true)) {
            op.target = *t;
        }
    };
    if (*kind == "add") {
        op.kind = EditOp::Kind::Add;
        detail::reject_unknown_keys(root, "", {"op", "instance"}, issues);
        if (const auto it = root.find("instance"); it == root.end()) {
            issues.add("instance", "missing required object");
        } else if (auto layout = detail::layout_from_json(*it, "instance", issues)) {
            op.instance = std::move(*layout);
        }
    } else if (*kind == "remove") {
        op.kind = EditOp::Kind::Remove;
        detail::reject_unknown_keys(root, "", {"op", "target"}, issues);
        target();
    } else if (*kind == "translate") {
        op.kind = EditOp::Kind::Translate;
        detail::reject_unknown_keys(root, "", {"op", "target", "offset"}, issues);
        target();
        if (auto v = detail::get_vec3(root, "offset", "", issues, true)) {
            op.offset = *v;
        }
    } else if (*kind == "rotate") {
        op.kind = EditOp::Kind::Rotate;
        detail::reject_unknown_keys(root, "", {"op", "target", "degrees"}, issues);
        target();
        if (auto d = detail::get_number(root, "degrees", "", issues, true)) {
            op.degrees = *d;
        }
    } else if (*kind == "scale") {
        op.kind = EditOp::Kind::Scale;
        detail::reject_unknown_keys(root, "", {"op", "target", "factor"}, issues);
        target();
        if (auto f = detail::get_number(root, "factor", "", issues, true)) {
            if (*f <= 0.0) {
                issues.add("factor", "must be > 0");
            }
            op.factor = *f;
        }
    } else if (*kind == "relabel") {
        op.kind = EditOp::Kind::Relabel;
        detail::reject_unknown_keys(root, "", {"op", "target", "prompt"}, issues);
        target();
        if (auto p = detail::get_string(root, "prompt", "", issues, true)) {
            op.prompt = *p;
        }
    } else {
        issues.add("op", "must be one of add, remove, translate, rotate, scale, relabel");
    }
    issues.raise();
    op.validate();
    return op;
}

std::string edit_to_json(const EditOp &op) {
    Json j;
    switch (op.kind) {
    case EditOp::Kind::Add:
        j["op"] = "add";
        j["instance"] = detail::layout_to_json(op.instance);
        break;
    case EditOp::Kind::Remove:
        j["op"] = "remove";
        j["target"] = op.target;
        break;
    case EditOp::Kind::Translate:
        j["op"] = "translate";
        j["target"] = op.target;
        j["offset"] = detail::vec3_to_json(op.offset);
        break;
    case EditOp::Kind::Rotate:
        j["op"] = "rotate";
        j["target"] = op.target;
        j["degrees"] = op.degrees;
        break;
    case EditOp::Kind::Scale:
        j["op"] = "scale";
        j["target"] = op.target;
        j["factor"] = op.factor;
        break;
    case EditOp::Kind::Relabel:
        j["op"] = "relabel";
        j["target"] = op.target;
        j["prompt"] = op.prompt;
        break;
    }
    return j.dump();
}

std::string to_string(RunStatus s) {
    switch (s) {
    case RunStatus::Idle: return "idle";
    case RunStatus::Running: return "running";
    case RunStatus::Paused: return "paused";
    }
    return "idle";
}

ControlRequest parse_control(std::string_view json_text) {
    const Json root = detail::parse_json(json_text, "control request");
    if (!root.is_object()) {
        throw ValidationError("control request must be a JSON object");
    }
    IssueSink issues;
    ControlRequest req;
    detail::reject_unknown_keys(root, "", {"action", "steps", "scope"}, issues);
    const auto action = detail::get_string(root, "action", "", issues, true);
    if (action) {
        if (*action == "start") {
            req.action = ControlRequest::Action::Start;
        } else if (*action == "pause") {
            req.action = ControlRequest::Action::Pause;
        } else if (*action == "resume") {
            req.action = ControlRequest::Action::Resume;
        } else if (*action == "stop") {
            req.action = ControlRequest::Action::Stop;
        } else {
            issues.add("action", "must be one of start, pause, resume, stop");
        }
    }
    if (auto steps = detail::get_number(root, "steps", "", issues, false)) {
        if (*steps < 1.0 || *steps != std::floor(*steps)) {
            issues.add("steps", "must be a positive integer");
        } else {
            req.steps = static_cast<std::uint64_t>(*steps);
        }
    }
    if (const auto it = root.find("scope"); it != root.end()) {
        if (it->is_string() && it->get<std::string>() == "all") {
            // whole scene
        } else if (it->is_array() && !it->empty()) {
            for (std::size_t i = 0; i < it->size(); ++i) {
                if (!(*it)[i].is_string()) {
                    issues.add(detail::index_path("scope", i), "must be an instance id");
                } else {
                    req.local_ids.push_back((*it)[i].get<std::string>());
                }
            }
        } else {
            issues.add("scope", "must be \"all\" or a non-empty array of instance ids");
        }
    }
    if (action && req.action == ControlRequest::Action::Start && req.steps == 0) {
        issues.add("steps", "start needs a positive step count");
    }
    issues.raise();
    return req;
}

void CameraSpec::validate() const {
    std::vector<std::string> issues;
    if (!std::isfinite(azimuth_degrees)) {
        issues.emplace_back("azimuth must be finite");
    }
    if (!(elevation_degrees > -90.0 && elevation_degrees < 90.0)) {
        issues.emplace_back("elevation must lie in (-90, 90)");
    }
    if (radius && !(std::isfinite(*radius) && *radius > 0.0)) {
        issues.emplace_back("radius must be finite and > 0");
    }
    if (width < 1 || height < 1 || width > 4096 || height > 4096) {
        issues.emplace_back("width and height must lie in [1, 4096]");
    }
    if (!issues.empty()) {
        throw ValidationError(std::move(issues));
    }
}

Camera resolve_camera(const CameraSpec &spec, std::span<const InstanceLayout> layouts,
                      const CameraRig &rig) {
    spec.validate();
    CameraRig sized = rig;
    sized.width = spec.width;
    sized.height = spec.height;
    Vec3 center = Vec3::Zero();
    double radius = spec.radius.value_or(0.0);
    if (!layouts.empty()) {
        const SceneBounds bounds = scene_bounds(layouts);
        center = bounds.center;
        if (!spec.radius) {
            radius = rig.scene_radius_scale * bounds.radius;
        }
    }
    if (!(radius > 0.0)) {
        throw NumericalError("automatic camera radius needs a non-empty scene");
    }
    return orbit_camera(center, radius, degrees_to_radians(spec.azimuth_degrees),
                        degrees_to_radians(spec.elevation_degrees), sized);
}

void FrameChannel::push(Frame frame) {
    {
        std::lock_guard lk(mu_);
        if (closed_) {
            return;
        }
        slot_ = std::move(frame);
    }
    cv_.notify_all();
}

void FrameChannel::close() {
    {
        std::lock_guard lk(mu_);
        closed_ = true;
    }
    cv_.notify_all();
}

bool FrameChannel::closed() const {
    std::lock_guard lk(mu_);
    return closed_;
}

std::optional<Frame> FrameChannel::next(std::chrono::milliseconds timeout) {
    std::unique_lock lk(mu_);
    cv_.wait_for(lk, timeout, [&] { return slot_.has_value() || closed_; });
    if (!slot_) {
        return std::nullopt;
    }
    std::optional<Frame> out = std::move(slot_);
    slot_.reset();
    return out;
}

Session::Session(SceneState state, OptimizerConfig cfg, StepContext ctx, SurfaceSamplingConfig sampling)
    : cfg_(std::move(cfg)), ctx_(std::move(ctx)), sampling_(sampling), state_(std::move(state)) {
    cfg_.validate();
    published_ = std::make_shared<const SceneState>(state_);
    thread_ = std::thread([this] { worker(); });
}

Session::~Session() { shutdown(); }

PublishedScene Session::published() const {
    std::lock_guard lk(mu_);
    return {published_, status_};
}

LayoutDocument Session::layout() const { return layout_document(*published().state); }

std::optional<std::string> Session::failure() const {
    std::lock_guard lk(mu_);
    return failure_;
}

std::future<EditResult> Session::submit(EditOp op) {
    std::promise<EditResult> promise;
    std::future<EditResult> fut = promise.get_future();
    try {
        op.validate();
    } catch (const ValidationError &e) {
        promise.set_value({false, 0, e.what(), 400});
        return fut;
    }
    {
        std::lock_guard lk(mu_);
        if (stopping_) {
            promise.set_value({false, 0, "session is shut down", 409});
            return fut;
        }
        edits_.push_back({std::move(op), std::move(promise)});
    }
    cv_.notify_all();
    return fut;
}

RunStatus Session::control(const ControlRequest &req) {
    std::unique_lock lk(mu_);
    if (stopping_) {
        throw StateError("session is shut down");
    }
    switch (req.action) {
    case ControlRequest::Action::Start:
        if (status_ != RunStatus::Idle) {
            throw StateError("start is only valid while idle (status is " + to_string(status_) + ")");
        }
        if (req.steps == 0) {
            throw ValidationError("start needs a positive step count");
        }
        for (const auto &id : req.local_ids) {
            if (!published_->contains(id)) {
                throw NotFoundError("unknown instance '" + id + "'");
            }
        }
        run_total_ = req.steps;
        run_remaining_ = req.steps;
        run_index_ = 0;
        run_ids_ = req.local_ids;
        failure_.reset();
        status_ = RunStatus::Running;
        break;
    case ControlRequest::Action::Pause:
        if (status_ != RunStatus::Running) {
            throw StateError("pause is only valid while running (status is " + to_string(status_) + ")");
        }
        status_ = RunStatus::Paused;
        break;
    case ControlRequest::Action::Resume:
        if (status_ != RunStatus::Paused) {
            throw StateError("resume is only valid while paused (status is " + to_string(status_) + ")");
        }
        status_ = RunStatus::Running;
        break;
    case ControlRequest::Action::Stop:
        status_ = RunStatus::Idle;
        run_remaining_ = 0;
        break;
    }
    const RunStatus now = status_;
    lk.unlock();
    cv_.notify_all();
    idle_cv_.notify_all();
    return now;
}

void Session::wait_idle() {
    std::unique_lock lk(mu_);
    idle_cv_.wait(lk, [&] { return stopping_ || (status_ != RunStatus::Running && !busy_); });
}

Image Session::render_view(const CameraSpec &spec) const {
    spec.validate();
    const std::shared_ptr<const SceneState> state = published().state;
    if (state->instances.empty()) {
        Image img(spec.width, spec.height);
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) {
                for (int c = 0; c < 3; ++c) {
                    img.at(x, y, c) = ctx_.background[c];
                }
            }
        }
        return img;
    }
    const auto layouts = state->layouts();
    const Camera cam = resolve_camera(spec, layouts, ctx_.guidance.rig);
    return render_forward(assemble_scene(state->instances), cam, ctx_.background, ctx_.raster).rgb;
}

std::shared_ptr<FrameChannel> Session::open_stream(const CameraSpec &spec, std::uint64_t cadence) {
    spec.validate();
    if (cadence == 0) {
        throw ValidationError("frame cadence must be >= 1");
    }
    auto channel = std::make_shared<FrameChannel>(spec, cadence);
    std::lock_guard lk(mu_);
    if (stopping_) {
        channel->close();
    } else {
        streams_.push_back(channel);
    }
    return channel;
}

void Session::shutdown() {
    std::vector<std::shared_ptr<FrameChannel>> streams;
    {
        std::lock_guard lk(mu_);
        if (stopping_ && !thread_.joinable()) {
            return;
        }
        stopping_ = true;
        status_ = RunStatus::Idle;
        run_remaining_ = 0;
        streams.swap(streams_);
    }
    cv_.notify_all();
    idle_cv_.notify_all();
    if (thread_.joinable()) {
        thread_.join();
    }
    for (auto &s : streams) {
        s->close();
    }
}

void Session::publish_locked() { published_ = std::make_shared<const SceneState>(state_); }

EditResult Session::apply_locked(const EditOp &op) {
    const std::uint64_t at = state_.step;
    if (op.kind == EditOp::Kind::Add) {
        if (state_.contains(op.instance.id)) {
            return {false, at, "instance '" + op.instance.id + "' already exists", 409};
        }
        add_instance(state_, op.instance, sampling_);
        return {true, at, {}, 200};
    }
    if (!state_.contains(op.target)) {
        return {false, at, "unknown instance '" + op.target + "'", 404};
    }
    InstanceLayout &layout = state_.instances[state_.index_of(op.target)].layout;
    switch (op.kind) {
    case EditOp::Kind::Remove:
        remove_instance(state_, op.target);
        break;
    case EditOp::Kind::Translate:
        layout.center += op.offset;
        break;
    case EditOp::Kind::Rotate:
        layout.yaw = wrap_angle(layout.yaw + degrees_to_radians(op.degrees));
        break;
    case EditOp::Kind::Scale: {
        const double k = layout.scale_factor * op.factor;
        if (k < cfg_.min_scale_factor || k > cfg_.max_scale_factor) {
            return {false, at, "scale factor would leave [" + std::to_string(cfg_.min_scale_factor) +
                                   ", " + std::to_string(cfg_.max_scale_factor) + "]",
                    400};
        }
        layout.scale_factor = k;
        break;
    }
    case EditOp::Kind::Relabel:
        for (const auto *provider : {ctx_.instance_provider.get(), ctx_.scene_provider.get()}) {
            if (provider != nullptr && !provider->supports_prompt(op.prompt)) {
                return {false, at,
                        "guidance provider '" + provider->kind() + "' has no assets for prompt '" +
                            op.prompt + "'",
                        409};
            }
        }
        layout.prompt = op.prompt;
        break;
    case EditOp::Kind::Add:
        break;
    }
    return {true, at, {}, 200};
}

void Session::emit_frames(const std::shared_ptr<const SceneState> &snap) {
    std::vector<std::shared_ptr<FrameChannel>> streams;
    {
        std::lock_guard lk(mu_);
        std::erase_if(streams_, [](const auto &s) { return s->closed(); });
        streams = streams_;
    }
    for (const auto &s : streams) {
        if (snap->step == 0 || snap->step % s->cadence() != 0) {
            continue;
        }
        Frame frame;
        frame.step = snap->step;
        if (snap->instances.empty()) {
            frame.image = Image(s->spec().width, s->spec().height);
            for (std::size_t k = 0; k < frame.image.pixels.size(); ++k) {
                frame.image.pixels[k] = ctx_.background[static_cast<int>(k % 3)];
            }
        } else {
            const auto layouts = snap->layouts();
            const Camera cam = resolve_camera(s->spec(), layouts, ctx_.guidance.rig);
            frame.image =
                render_forward(assemble_scene(snap->instances), cam, ctx_.background, ctx_.raster).rgb;
        }
        s->push(std::move(frame));
    }
}

void Session::worker() {
    std::unique_lock lk(mu_);
    while (true) {
        cv_.wait(lk, [&] {
            return stopping_ || !edits_.empty() || (status_ == RunStatus::Running && run_remaining_ > 0);
        });
        if (stopping_) {
            for (auto &e : edits_) {
                e.done.set_value({false, 0, "session is shut down", 409});
            }
            edits_.clear();
            break;
        }

        // Edits commit between steps, in arrival order, before any waiting step.
        if (!edits_.empty()) {
            std::vector<std::pair<std::promise<EditResult>, EditResult>> results;
            while (!edits_.empty()) {
                PendingEdit e = std::move(edits_.front());
                edits_.pop_front();
                EditResult r;
                try {
                    r = apply_locked(e.op);
                } catch (const Error &err) {
                    r = {false, state_.step, err.what(), 400};
                }
                results.emplace_back(std::move(e.done), std::move(r));
            }
            std::erase_if(run_ids_, [&](const std::string &id) { return !state_.contains(id); });
            publish_locked();
            for (auto &[promise, result] : results) {
                promise.set_value(std::move(result));
            }
            continue;
        }

        if (!(status_ == RunStatus::Running && run_remaining_ > 0)) {
            continue;
        }
        StepOptions opts;
        if (!run_ids_.empty()) {
            opts.active.assign(state_.instances.size(), false);
            for (const auto &id : run_ids_) {
                opts.active[state_.index_of(id)] = true;
            }
        }
        const bool local_run = !run_ids_.empty();
        const double eta = timestep_at(run_index_, run_total_, ctx_.guidance);
        busy_ = true;
        lk.unlock();

        std::optional<std::string> error;
        if (local_run && std::none_of(opts.active.begin(), opts.active.end(), [](bool b) { return b; })) {
            error = "every instance of the local run was removed";
        } else if (state_.instances.empty()) {
            error = "cannot optimize an empty scene";
        } else {
            try {
                step(state_, cfg_, ctx_, eta, opts);
            } catch (const std::exception &e) {
                error = e.what();
            }
        }

        lk.lock();
        busy_ = false;
        if (error) {
            failure_ = error;
            status_ = RunStatus::Idle;
            run_remaining_ = 0;
            idle_cv_.notify_all();
            continue;
        }
        ++run_index_;
        if (run_remaining_ > 0) {
            --run_remaining_;
        }
        if (run_remaining_ == 0 && status_ == RunStatus::Running) {
            status_ = RunStatus::Idle;
        }
        publish_locked();
        const auto snap = published_;
        lk.unlock();
        emit_frames(snap);
        idle_cv_.notify_all();
        lk.lock();
    }
}

std::string scene_to_json(const PublishedScene &scene) {
    Json j = Json::parse(serialize_layout(layout_document(*scene.state)));
    j["status"] = to_string(scene.status);
    j["step"] = scene.state->step;
    return j.dump(2);
}

std::string encode_frame(const Frame &frame) {
    std::string out(16, '\0');
    const auto put = [&](std::size_t at, auto v) {
        for (std::size_t b = 0; b < sizeof(v); ++b) {
            out[at + b] = static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * b)) & 0xff);
        }
    };
    put(0, frame.step);
    put(8, static_cast<std::uint32_t>(frame.image.width));
    put(12, static_cast<std::uint32_t>(frame.image.height));
    out.reserve(16 + frame.image.pixels.size());
    for (const double v : frame.image.pixels) {
        out.push_back(static_cast<char>(quantize_channel(v)));
    }
    return out;
}

int default_port() {
    if (const char *env = std::getenv("LAYOUTSPLAT_PORT")) {
        char *end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0 && v < 65536) {
            return static_cast<int>(v);
        }
    }
    return kDefaultPort;
}

namespace {

void send_json(httplib::Response &res, int status, const Json &body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response &res, int status, const std::string &message) {
    send_json(res, status, {{"error", message}});
}

CameraSpec camera_from_query(const httplib::Request &req) {
    CameraSpec spec;
    std::vector<std::string> issues;
    const auto number = [&](const char *key, auto &out) {
        if (!req.has_param(key)) {
            return;
        }
        const std::string v = req.get_param_value(key);
        char *end = nullptr;
        const double d = std::strtod(v.c_str(), &end);
        if (v.empty() || *end != '\0') {
            issues.push_back(std::string(key) + " must be a number");
            return;
        }
        out = static_cast<std::remove_reference_t<decltype(out)>>(d);
    };
    number("azimuth", spec.azimuth_degrees);
    number("elevation", spec.elevation_degrees);
    number("width", spec.width);
    number("height", spec.height);
    if (req.has_param("radius") && req.get_param_value("radius") != "auto") {
        double r = 0.0;
        number("radius", r);
        spec.radius = r;
    }
    if (!issues.empty()) {
        throw ValidationError(std::move(issues));
    }
    spec.validate();
    return spec;
}

} // namespace

struct EditServer::Impl {
    Session &session;
    httplib::Server server;
    std::thread thread;

    explicit Impl(Session &s) : session(s) {}
};

EditServer::EditServer(Session &session) : impl_(std::make_unique<Impl>(session)) {
    auto &srv = impl_->server;
    Session &s = session;
    // SO_REUSEADDR only: the library default (SO_REUSEPORT) lets a second
    // server share a busy port instead of failing to bind.
    srv.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void *>(&yes), sizeof(yes));
    });

    srv.Get("/scene", [&s](const httplib::Request &, httplib::Response &res) {
        res.set_content(scene_to_json(s.published()), "application/json");
    });

    srv.Post("/edit", [&s](const httplib::Request &req, httplib::Response &res) {
        EditOp op;
        try {
            op = parse_edit(req.body);
        } catch (const ValidationError &e) {
            send_json(res, 400, {{"accepted", false}, {"reason", e.what()}});
            return;
        }
        const EditResult r = s.apply_edit(std::move(op));
        if (r.accepted) {
            send_json(res, 200, {{"accepted", true}, {"step", r.step}});
        } else {
            send_json(res, r.status, {{"accepted", false}, {"reason", r.reason}});
        }
    });

    srv.Post("/control", [&s](const httplib::Request &req, httplib::Response &res) {
        try {
            const RunStatus st = s.control(parse_control(req.body));
            send_json(res, 200, {{"status", to_string(st)}, {"step", s.published().state->step}});
        } catch (const ValidationError &e) {
            send_error(res, 400, e.what());
        } catch (const NotFoundError &e) {
            send_error(res, 404, e.what());
        } catch (const StateError &e) {
            send_error(res, 409, e.what());
        }
    });

    srv.Get("/render", [&s](const httplib::Request &req, httplib::Response &res) {
        try {
            const Image img = s.render_view(camera_from_query(req));
            res.set_content(encode_ppm(img), "image/x-portable-pixmap");
        } catch (const ValidationError &e) {
            send_error(res, 400, e.what());
        } catch (const NumericalError &e) {
            send_error(res, 422, e.what());
        }
    });

    srv.Get("/frames", [&s](const httplib::Request &req, httplib::Response &res) {
        std::shared_ptr<FrameChannel> channel;
        try {
            std::uint64_t cadence = 1;
            if (req.has_param("cadence")) {
                const std::string v = req.get_param_value("cadence");
                char *end = nullptr;
                const unsigned long long c = std::strtoull(v.c_str(), &end, 10);
                if (v.empty() || *end != '\0' || c == 0) {
                    throw ValidationError("cadence must be a positive integer");
                }
                cadence = c;
            }
            channel = s.open_stream(camera_from_query(req), cadence);
        } catch (const ValidationError &e) {
            send_error(res, 400, e.what());
            return;
        }
        res.set_chunked_content_provider(
            "application/octet-stream",
            [channel](std::size_t, httplib::DataSink &sink) {
                if (!sink.is_writable()) {
                    return false;
                }
                if (auto frame = channel->next(std::chrono::milliseconds(200))) {
                    const std::string bytes = encode_frame(*frame);
                    return sink.write(bytes.data(), bytes.size());
                }
                if (channel->closed()) {
                    sink.done();
                }
                return true;
            },
            [channel](bool) { channel->close(); });
    });
}

EditServer::~EditServer() { stop(); }

int EditServer::start(const std::string &host, int port) {
    auto &srv = impl_->server;
    if (port == 0) {
        port_ = srv.bind_to_any_port(host);
        if (port_ <= 0) {
            throw EnvironmentError("cannot bind " + host + " to any port");
        }
    } else {
        if (!srv.bind_to_port(host, port)) {
            throw EnvironmentError("cannot bind " + host + ":" + std::to_string(port) +
                                   " (address in use or not permitted)");
        }
        port_ = port;
    }
    impl_->thread = std::thread([&srv] { srv.listen_after_bind(); });
    srv.wait_until_ready();
    return port_;
}

void EditServer::stop() {
    if (!impl_) {
        return;
    }
    impl_->server.stop();
    if (impl_->thread.joinable()) {
        impl_->thread.join();
    }
}

} // namespace layoutsplat
