// Copyright 2026 The layoutsplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "layoutsplat/optimizer.hpp"
#include "layoutsplat/rasterizer.hpp"
#include "layoutsplat/scene.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace layoutsplat {

inline constexpr int kLayoutSchemaVersion = 1;

/// The layout JSON contract. Yaw is written in degrees, held in radians.
struct LayoutDocument {
    int version = kLayoutSchemaVersion;
    std::string scene_prompt;
    std::vector<InstanceLayout> instances;

    bool operator==(const LayoutDocument &) const = default;
};

/// Throws ValidationError listing every violation in document order.
LayoutDocument parse_layout(std::string_view json_text);
/// Pretty-printed JSON with shortest round-trip numbers. parse_layout of the
/// result reproduces `doc` exactly, including the radian yaw.
std::string serialize_layout(const LayoutDocument &doc);

LayoutDocument layout_document(const SceneState &state);

std::string read_file(const std::filesystem::path &path);
/// Writes through a temporary file and renames, so readers never see a partial file.
void write_file(const std::filesystem::path &path, std::string_view bytes);

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Full optimizer state plus the run configuration it was produced with.
struct SceneCheckpoint {
    SceneState state;
    /// Run configuration as JSON text; may be empty.
    std::string config_json;

    bool operator==(const SceneCheckpoint &) const = default;
};

/// Container: "LSPLATCK", u32 version, u64 payload size, payload, u64 FNV-1a
/// of the payload. All integers and doubles little-endian, doubles bit-exact.
std::string save_checkpoint(const SceneCheckpoint &ckpt);
/// Throws ChecksumError on truncation or corruption and VersionError on an
/// unknown container version.
SceneCheckpoint load_checkpoint(std::string_view bytes);

/// Binary little-endian PLY with the usual splat properties: x y z,
/// f_dc_0..2, opacity (logit), scale_0..2 (log), rot_0..3 (w x y z), all in
/// the world frame. Instance ownership is not stored. Throws EmptySceneError.
std::string export_ply(const SceneSnapshot &snapshot);

struct PlyVertex {
    std::array<float, 3> position;
    std::array<float, 3> f_dc;
    float opacity;
    std::array<float, 3> log_scale;
    std::array<float, 4> rotation;
};
/// Reads files written by export_ply. Throws IoError on any other layout.
std::vector<PlyVertex> read_ply(std::string_view bytes);

/// SH band-0 constant used for the DC color encoding.
inline constexpr double kShC0 = 0.28209479177387814;

/// Clamps to [0, 1] and rounds v * 255 half-to-even. NaN maps to 0.
std::uint8_t quantize_channel(double v);
/// Binary PPM (P6, maxval 255).
std::string encode_ppm(const Image &img);
/// Reads P6 files with maxval 255 into [0, 1] values.
Image decode_ppm(std::string_view bytes);
void write_image(const RenderedImage &img, const std::filesystem::path &path);
Image read_image(const std::filesystem::path &path);

} // namespace layoutsplat
