// Copyright 2026 The layoutsplat Authors
// SPDX-License-Identifier: Apache-2.0

#include "layoutsplat/scene_io.hpp"

#include "json_support.hpp"
#include "layoutsplat/errors.hpp"
#include "layoutsplat/rng.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace layoutsplat {

using detail::Json;

LayoutDocument parse_layout(std::string_view json_text) {
    const Json root = detail::parse_json(json_text, "layout document");
    detail::IssueSink issues;
    LayoutDocument doc;
    if (!root.is_object()) {
        issues.add("", "layout document must be a JSON object");
        issues.raise();
    }
    detail::reject_unknown_keys(root, "", {"version", "scene_prompt", "instances"}, issues);

    if (const auto it = root.find("version"); it == root.end()) {
        issues.add("version", "missing required integer");
    } else if (!it->is_number_integer()) {
        issues.add("version", "must be an integer");
    } else if (it->get<long long>() != kLayoutSchemaVersion) {
        issues.add("version", "unsupported schema version " + std::to_string(it->get<long long>()) +
                                  " (expected " + std::to_string(kLayoutSchemaVersion) + ")");
    }
    if (auto prompt = detail::get_string(root, "scene_prompt", "", issues, true)) {
        doc.scene_prompt = *prompt;
    }

    const auto inst = root.find("instances");
    if (inst == root.end()) {
        issues.add("instances", "missing required array");
    } else if (!inst->is_array()) {
        issues.add("instances", "must be an array");
    } else {
        std::map<std::string, std::size_t> first_seen;
        for (std::size_t i = 0; i < inst->size(); ++i) {
            const std::string path = detail::index_path("instances", i);
            const Json &obj = (*inst)[i];
            // Duplicates are reported even when the rest of the entry is broken.
            if (obj.is_object()) {
                if (const auto id = obj.find("id"); id != obj.end() && id->is_string()) {
                    const std::string name = id->get<std::string>();
                    const auto [pos, fresh] = first_seen.emplace(name, i);
                    if (!fresh) {
                        issues.add(detail::join_path(path, "id"),
                                   "duplicate id '" + name + "' (first used by " +
                                       detail::index_path("instances", pos->second) + ")");
                    }
                }
            }
            if (auto layout = detail::layout_from_json(obj, path, issues)) {
                doc.instances.push_back(std::move(*layout));
            }
        }
    }
    issues.raise();
    return doc;
}

std::string serialize_layout(const LayoutDocument &doc) {
    Json root;
    root["version"] = doc.version;
    root["scene_prompt"] = doc.scene_prompt;
    root["instances"] = Json::array();
    for (const auto &layout : doc.instances) {
        root["instances"].push_back(detail::layout_to_json(layout));
    }
    return root.dump(2) + "\n";
}

LayoutDocument layout_document(const SceneState &state) {
    LayoutDocument doc;
    doc.scene_prompt = state.scene_prompt;
    doc.instances = state.layouts();
    return doc;
}

std::string read_file(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "' for reading");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) {
        throw IoError("failed reading '" + path.string() + "'");
    }
    return std::move(ss).str();
}

void write_file(const std::filesystem::path &path, std::string_view bytes) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open '" + tmp.string() + "' for writing");
        }
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) {
            throw IoError("failed writing '" + tmp.string() + "'");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot move output into place at '" + path.string() + "'");
    }
}

namespace {

constexpr char kMagic[8] = {'L', 'S', 'P', 'L', 'A', 'T', 'C', 'K'};

template <typename T>
T to_little(T v) {
    if constexpr (std::endian::native == std::endian::big) {
        T r = 0;
        for (std::size_t b = 0; b < sizeof(T); ++b) {
            r = static_cast<T>((r << 8) | ((v >> (8 * b)) & 0xff));
        }
        return r;
    }
    return v;
}

class Writer {
  public:
    void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) { raw(to_little(v)); }
    void u64(std::uint64_t v) { raw(to_little(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void str(std::string_view s) {
        u64(s.size());
        out_.append(s);
    }
    void doubles(std::span<const double> v) {
        for (const double x : v) {
            f64(x);
        }
    }
    void sized(std::span<const double> v) {
        u64(v.size());
        doubles(v);
    }
    std::string &bytes() { return out_; }

  private:
    template <typename T>
    void raw(T v) {
        char buf[sizeof(T)];
        std::memcpy(buf, &v, sizeof(T));
        out_.append(buf, sizeof(T));
    }
    std::string out_;
};

class Reader {
  public:
    explicit Reader(std::string_view bytes) : in_(bytes) {}
    std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
    std::uint32_t u32() { return to_little(raw<std::uint32_t>()); }
    std::uint64_t u64() { return to_little(raw<std::uint64_t>()); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        const std::uint64_t n = u64();
        return std::string(take(n));
    }
    void doubles(std::span<double> v) {
        for (double &x : v) {
            x = f64();
        }
    }
    std::vector<double> sized() {
        const std::uint64_t n = u64();
        if (n > remaining() / 8) {
            throw ChecksumError("checkpoint payload is truncated");
        }
        std::vector<double> v(n);
        doubles(v);
        return v;
    }
    std::size_t remaining() const { return in_.size() - pos_; }

  private:
    std::string_view take(std::uint64_t n) {
        if (n > remaining()) {
            throw ChecksumError("checkpoint payload is truncated");
        }
        const std::string_view s = in_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    template <typename T>
    T raw() {
        T v;
        std::memcpy(&v, take(sizeof(T)).data(), sizeof(T));
        return v;
    }
    std::string_view in_;
    std::size_t pos_ = 0;
};

void write_moments(Writer &w, const AdamMoments &m) {
    w.u64(m.t);
    w.sized(m.m);
    w.sized(m.v);
}

AdamMoments read_moments(Reader &r) {
    AdamMoments m;
    m.t = r.u64();
    m.m = r.sized();
    m.v = r.sized();
    return m;
}

template <typename V>
void read_array(Reader &r, std::vector<V> &v, std::size_t m) {
    v.resize(m);
    r.doubles(flat(v));
}

} // namespace

std::string save_checkpoint(const SceneCheckpoint &ckpt) {
    const SceneState &s = ckpt.state;
    Writer p;
    p.str(ckpt.config_json);
    p.str(s.scene_prompt);
    p.u64(s.seed);
    p.u64(s.step);
    p.u64(s.instances.size());
    for (std::size_t i = 0; i < s.instances.size(); ++i) {
        const auto &l = s.instances[i].layout;
        const auto &g = s.instances[i].gaussians;
        g.check_consistent();
        p.str(l.id);
        p.str(l.prompt);
        p.doubles({l.center.data(), 3});
        p.doubles({l.extents.data(), 3});
        p.f64(l.scale_factor);
        p.f64(l.yaw);
        p.f64(l.opacity_gain);
        p.u8(l.learnable.center);
        p.u8(l.learnable.scale_factor);
        p.u8(l.learnable.yaw);
        p.u8(l.learnable.opacity);
        p.u64(g.size());
        p.doubles(flat(g.positions));
        p.doubles(flat(g.rotations));
        p.doubles(flat(g.scales_raw));
        p.doubles(flat(g.opacity_raw));
        p.doubles(flat(g.colors_raw));
        const InstanceMoments empty;
        const InstanceMoments &m = i < s.moments.size() ? s.moments[i] : empty;
        for (const AdamMoments *group : {&m.position, &m.rotation, &m.scale, &m.opacity, &m.color,
                                         &m.center, &m.scale_factor, &m.yaw, &m.opacity_gain}) {
            write_moments(p, *group);
        }
    }

    Writer out;
    out.bytes().append(kMagic, sizeof(kMagic));
    out.u32(kCheckpointVersion);
    out.u64(p.bytes().size());
    out.bytes().append(p.bytes());
    out.u64(fnv1a64(p.bytes()));
    return std::move(out.bytes());
}

SceneCheckpoint load_checkpoint(std::string_view bytes) {
    if (bytes.size() < sizeof(kMagic) + 4 + 8 + 8) {
        throw ChecksumError("checkpoint is truncated");
    }
    if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
        throw ChecksumError("not a checkpoint file (bad magic)");
    }
    Reader header(bytes.substr(sizeof(kMagic)));
    const std::uint32_t version = header.u32();
    if (version != kCheckpointVersion) {
        throw VersionError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                           std::to_string(kCheckpointVersion) + ")");
    }
    const std::uint64_t size = header.u64();
    const std::size_t offset = sizeof(kMagic) + 12;
    if (size != bytes.size() - offset - 8) {
        throw ChecksumError("checkpoint length does not match its header");
    }
    const std::string_view payload = bytes.substr(offset, size);
    Reader tail(bytes.substr(offset + size));
    if (tail.u64() != fnv1a64(payload)) {
        throw ChecksumError("checkpoint checksum mismatch");
    }

    Reader r(payload);
    SceneCheckpoint ckpt;
    SceneState &s = ckpt.state;
    ckpt.config_json = r.str();
    s.scene_prompt = r.str();
    s.seed = r.u64();
    s.step = r.u64();
    const std::uint64_t n = r.u64();
    for (std::uint64_t i = 0; i < n; ++i) {
        Instance inst;
        auto &l = inst.layout;
        l.id = r.str();
        l.prompt = r.str();
        r.doubles({l.center.data(), 3});
        r.doubles({l.extents.data(), 3});
        l.scale_factor = r.f64();
        l.yaw = r.f64();
        l.opacity_gain = r.f64();
        l.learnable.center = r.u8() != 0;
        l.learnable.scale_factor = r.u8() != 0;
        l.learnable.yaw = r.u8() != 0;
        l.learnable.opacity = r.u8() != 0;
        const std::uint64_t m = r.u64();
        if (m > r.remaining() / (14 * 8)) {
            throw ChecksumError("checkpoint payload is truncated");
        }
        auto &g = inst.gaussians;
        read_array(r, g.positions, m);
        read_array(r, g.rotations, m);
        read_array(r, g.scales_raw, m);
        read_array(r, g.opacity_raw, m);
        read_array(r, g.colors_raw, m);
        InstanceMoments mom;
        for (AdamMoments *group : {&mom.position, &mom.rotation, &mom.scale, &mom.opacity, &mom.color,
                                   &mom.center, &mom.scale_factor, &mom.yaw, &mom.opacity_gain}) {
            *group = read_moments(r);
        }
        s.instances.push_back(std::move(inst));
        s.moments.push_back(std::move(mom));
    }
    if (r.remaining() != 0) {
        throw ChecksumError("checkpoint payload has trailing bytes");
    }
    for (const auto &inst : s.instances) {
        inst.layout.validate();
    }
    return ckpt;
}

namespace {

constexpr const char *kPlyProperties[] = {"x",       "y",       "z",       "f_dc_0", "f_dc_1",
                                          "f_dc_2",  "opacity", "scale_0", "scale_1", "scale_2",
                                          "rot_0",   "rot_1",   "rot_2",   "rot_3"};

std::string ply_header(std::size_t count) {
    std::string h = "ply\nformat binary_little_endian 1.0\n"
                    "comment layoutsplat export; instance ownership is not stored\n";
    h += "element vertex " + std::to_string(count) + "\n";
    for (const char *name : kPlyProperties) {
        h += std::string("property float ") + name + "\n";
    }
    h += "end_header\n";
    return h;
}

/// Rotation and per-axis standard deviations of a symmetric positive
/// definite covariance, with the quaternion in canonical form (w >= 0).
void decompose_covariance(const Mat3 &cov, Vec4 &quat, Vec3 &scales) {
    Eigen::SelfAdjointEigenSolver<Mat3> solver(0.5 * (cov + cov.transpose()));
    Mat3 r = solver.eigenvectors();
    if (r.determinant() < 0.0) {
        r.col(2) = -r.col(2);
    }
    for (int a = 0; a < 3; ++a) {
        scales[a] = std::sqrt(std::max(solver.eigenvalues()[a], 1e-300));
    }
    Eigen::Quaterniond q(r);
    q.normalize();
    if (q.w() < 0.0) {
        q.coeffs() = -q.coeffs();
    }
    quat = Vec4(q.w(), q.x(), q.y(), q.z());
}

} // namespace

std::string export_ply(const SceneSnapshot &snapshot) {
    if (snapshot.empty()) {
        throw EmptySceneError("cannot export an empty scene to PLY");
    }
    Writer w;
    w.bytes() = ply_header(snapshot.size());
    for (std::size_t i = 0; i < snapshot.size(); ++i) {
        Vec4 quat;
        Vec3 scales;
        decompose_covariance(snapshot.covariances[i], quat, scales);
        for (int a = 0; a < 3; ++a) {
            w.f32(static_cast<float>(snapshot.positions[i][a]));
        }
        for (int a = 0; a < 3; ++a) {
            w.f32(static_cast<float>((snapshot.colors[i][a] - 0.5) / kShC0));
        }
        const double op = std::clamp(snapshot.opacities[i], 1e-12, 1.0 - 1e-12);
        w.f32(static_cast<float>(logit(op)));
        for (int a = 0; a < 3; ++a) {
            w.f32(static_cast<float>(std::log(scales[a])));
        }
        for (int a = 0; a < 4; ++a) {
            w.f32(static_cast<float>(quat[a]));
        }
    }
    return std::move(w.bytes());
}

std::vector<PlyVertex> read_ply(std::string_view bytes) {
    const std::size_t end = bytes.find("end_header\n");
    if (end == std::string_view::npos) {
        throw IoError("PLY header is incomplete");
    }
    std::istringstream header(std::string(bytes.substr(0, end)));
    std::string line;
    std::size_t count = 0;
    bool have_count = false;
    std::vector<std::string> props;
    bool have_format = false;
    while (std::getline(header, line)) {
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt != "binary_little_endian") {
                throw IoError("PLY format '" + fmt + "' is not supported");
            }
            have_format = true;
        } else if (word == "element") {
            std::string name;
            ls >> name >> count;
            if (name != "vertex" || have_count) {
                throw IoError("PLY must contain exactly one vertex element");
            }
            have_count = true;
        } else if (word == "property") {
            std::string type, name;
            ls >> type >> name;
            if (type != "float") {
                throw IoError("PLY property '" + name + "' is not float");
            }
            props.push_back(name);
        }
    }
    if (!have_format || !have_count || props.size() != std::size(kPlyProperties)) {
        throw IoError("PLY header does not match the splat layout");
    }
    for (std::size_t k = 0; k < props.size(); ++k) {
        if (props[k] != kPlyProperties[k]) {
            throw IoError("unexpected PLY property '" + props[k] + "'");
        }
    }
    const std::string_view body = bytes.substr(end + std::strlen("end_header\n"));
    if (body.size() != count * props.size() * 4) {
        throw IoError("PLY body size does not match the vertex count");
    }
    Reader r(body);
    std::vector<PlyVertex> out(count);
    const auto f = [&] { return std::bit_cast<float>(r.u32()); };
    for (auto &v : out) {
        for (float &x : v.position) x = f();
        for (float &x : v.f_dc) x = f();
        v.opacity = f();
        for (float &x : v.log_scale) x = f();
        for (float &x : v.rotation) x = f();
    }
    return out;
}

std::uint8_t quantize_channel(double v) {
    if (!(v > 0.0)) {
        return 0;
    }
    if (v >= 1.0) {
        return 255;
    }
    // nearbyint honors the default round-to-nearest-even mode.
    return static_cast<std::uint8_t>(std::nearbyint(v * 255.0));
}

std::string encode_ppm(const Image &img) {
    std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    out.reserve(out.size() + img.pixels.size());
    for (const double v : img.pixels) {
        out.push_back(static_cast<char>(quantize_channel(v)));
    }
    return out;
}

Image decode_ppm(std::string_view bytes) {
    std::size_t pos = 0;
    const auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') {
                    ++pos;
                }
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
    };
    const auto token = [&] {
        skip_space();
        const std::size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
            ++pos;
        }
        return std::string(bytes.substr(start, pos - start));
    };
    if (token() != "P6") {
        throw IoError("image is not a binary PPM (P6)");
    }
    int w = 0, h = 0, maxval = 0;
    try {
        w = std::stoi(token());
        h = std::stoi(token());
        maxval = std::stoi(token());
    } catch (const std::exception &) {
        throw IoError("PPM header is malformed");
    }
    if (w < 1 || h < 1 || maxval != 255) {
        throw IoError("PPM must have positive size and maxval 255");
    }
    ++pos; // single whitespace byte after maxval
    const std::size_t need = static_cast<std::size_t>(w) * h * 3;
    if (bytes.size() < pos + need) {
        throw IoError("PPM pixel data is truncated");
    }
    Image img(w, h);
    for (std::size_t k = 0; k < need; ++k) {
        img.pixels[k] = static_cast<unsigned char>(bytes[pos + k]) / 255.0;
    }
    return img;
}

void write_image(const RenderedImage &img, const std::filesystem::path &path) {
    write_file(path, encode_ppm(img.rgb));
}

Image read_image(const std::filesystem::path &path) { return decode_ppm(read_file(path)); }

} // namespace layoutsplat
