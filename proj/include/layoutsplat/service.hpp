// Copyright 2026 The layoutsplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "layoutsplat/geometry_control.hpp"
#include "layoutsplat/optimizer.hpp"
#include "layoutsplat/scene_io.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace layoutsplat {

/// One layout edit. `target` names the instance for every kind except Add.
struct EditOp {
    enum class Kind { Add, Remove, Translate, Rotate, Scale, Relabel };

    Kind kind = Kind::Translate;
    std::string target;
    /// Translate: world offset.
    Vec3 offset = Vec3::Zero();
    /// Rotate: yaw change in degrees.
    double degrees = 0.0;
    /// Scale: multiplies scale_factor; > 0.
    double factor = 1.0;
    /// Relabel: new prompt.
    std::string prompt;
    /// Add: the new instance.
    InstanceLayout instance;

    /// Throws ValidationError for payloads that cannot be valid in any scene.
    void validate() const;
};

/// Parses the JSON body of POST /edit. Throws ValidationError.
EditOp parse_edit(std::string_view json_text);
std::string edit_to_json(const EditOp &op);

struct EditResult {
    bool accepted = false;
    /// Step counter value at which the edit took effect.
    std::uint64_t step = 0;
    std::string reason;
    /// HTTP-style status for rejections: 400 invalid, 404 unknown target, 409 conflict.
    int status = 200;
};

enum class RunStatus { Idle, Running, Paused };
std::string to_string(RunStatus s);

struct ControlRequest {
    enum class Action { Start, Pause, Resume, Stop };

    Action action = Action::Start;
    /// Start: number of steps to run.
    std::uint64_t steps = 0;
    /// Start: instances to optimize; empty means the whole scene.
    std::vector<std::string> local_ids;
};

ControlRequest parse_control(std::string_view json_text);

/// Orbit camera description. Radius nullopt means the scene bounding-sphere
/// radius used by scene guidance, scaled by the rig's scene_radius_scale.
struct CameraSpec {
    double azimuth_degrees = 0.0;
    double elevation_degrees = 15.0;
    std::optional<double> radius;
    int width = 128;
    int height = 128;

    void validate() const;
};

/// Camera for `spec` around `layouts`. Throws NumericalError for an empty or
/// degenerate scene when the radius is automatic.
Camera resolve_camera(const CameraSpec &spec, std::span<const InstanceLayout> layouts,
                      const CameraRig &rig);

/// State published after every step or edit, with the status at read time.
struct PublishedScene {
    std::shared_ptr<const SceneState> state;
    RunStatus status = RunStatus::Idle;
};

struct Frame {
    std::uint64_t step = 0;
    Image image;
};

/// Single-slot frame mailbox. The producer overwrites unread frames, so a
/// slow reader sees the newest frame and never an out-of-order one.
class FrameChannel {
  public:
    FrameChannel(CameraSpec spec, std::uint64_t cadence) : spec_(spec), cadence_(cadence) {}

    const CameraSpec &spec() const { return spec_; }
    std::uint64_t cadence() const { return cadence_; }

    void push(Frame frame);
    void close();
    bool closed() const;
    /// Waits up to `timeout` for a frame; nullopt on timeout or when closed.
    std::optional<Frame> next(std::chrono::milliseconds timeout);

  private:
    CameraSpec spec_;
    std::uint64_t cadence_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::optional<Frame> slot_;
    bool closed_ = false;
};

/// One editing session. A private worker thread owns the scene state: it
/// applies queued edits and runs optimizer steps, publishing an immutable
/// copy after each. All public methods are thread-safe.
class Session {
  public:
    Session(SceneState state, OptimizerConfig cfg, StepContext ctx, SurfaceSamplingConfig sampling);
    ~Session();

    Session(const Session &) = delete;
    Session &operator=(const Session &) = delete;

    PublishedScene published() const;
    LayoutDocument layout() const;

    /// Queues an edit; the future resolves once the worker has applied or rejected it.
    std::future<EditResult> submit(EditOp op);
    EditResult apply_edit(EditOp op) { return submit(std::move(op)).get(); }

    /// Throws StateError for transitions the state machine does not allow
    /// and NotFoundError for unknown local ids.
    RunStatus control(const ControlRequest &req);
    /// Blocks until the current run finishes or the session is paused or stopped.
    void wait_idle();

    Image render_view(const CameraSpec &spec) const;
    std::shared_ptr<FrameChannel> open_stream(const CameraSpec &spec, std::uint64_t cadence);

    /// Stops optimization and closes every stream. Idempotent.
    void shutdown();

    /// Non-null once a step failed; the state is left at the last good step.
    std::optional<std::string> failure() const;

  private:
    struct PendingEdit {
        EditOp op;
        std::promise<EditResult> done;
    };

    void worker();
    EditResult apply_locked(const EditOp &op);
    void publish_locked();
    void emit_frames(const std::shared_ptr<const SceneState> &snap);

    OptimizerConfig cfg_;
    StepContext ctx_;
    SurfaceSamplingConfig sampling_;

    // Owned by the worker thread.
    SceneState state_;
    std::uint64_t run_index_ = 0;

    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::condition_variable idle_cv_;
    std::deque<PendingEdit> edits_;
    RunStatus status_ = RunStatus::Idle;
    std::uint64_t run_total_ = 0;
    std::uint64_t run_remaining_ = 0;
    std::vector<std::string> run_ids_;
    bool stopping_ = false;
    bool busy_ = false;
    std::optional<std::string> failure_;
    std::shared_ptr<const SceneState> published_;
    std::vector<std::shared_ptr<FrameChannel>> streams_;

    std::thread thread_;
};

/// JSON body of GET /scene: the layout document plus status and step.
std::string scene_to_json(const PublishedScene &scene);

/// 16-byte little-endian frame header (step u64, width u32, height u32)
/// followed by 8-bit RGB.
std::string encode_frame(const Frame &frame);

/// HTTP front end for a Session.
///
///   GET  /scene
///   POST /edit     EditOp JSON
///   POST /control  {"action": "start"|"pause"|"resume"|"stop", "steps": n, "scope": "all"|[ids]}
///   GET  /render?azimuth&elevation&radius&width&height   binary PPM
///   GET  /frames?cadence&azimuth&elevation&radius&width&height   chunked frame stream
class EditServer {
  public:
    explicit EditServer(Session &session);
    ~EditServer();

    EditServer(const EditServer &) = delete;
    EditServer &operator=(const EditServer &) = delete;

    /// Binds and serves on a background thread. Port 0 picks a free port.
    /// Throws EnvironmentError when the address cannot be bound.
    int start(const std::string &host, int port);
    void stop();
    int port() const { return port_; }

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int port_ = 0;
};

inline constexpr int kDefaultPort = 7334;
/// LAYOUTSPLAT_PORT if set and valid, else kDefaultPort.
int default_port();

} // namespace layoutsplat
