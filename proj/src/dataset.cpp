#include "specrf/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "specrf/image_io.hpp"
#include "specrf/rng.hpp"

namespace fs = std::filesystem;

namespace specrf {

DatasetConfig::DatasetConfig() {
    // Desk still life: one mirror ball flanked by two matte spheres on a
    // bright table plane. The mirror dominates the center of every view.
    Sphere mirror;
    mirror.center = Vec3{0.0f, 0.0f, 0.62f};
    mirror.radius = 0.62f;
    mirror.material = Material::Mirror;
    mirror.albedo = Vec3{0.92f, 0.92f, 0.92f};

    Sphere matte_l;
    matte_l.center = Vec3{-1.05f, 0.35f, 0.30f};
    matte_l.radius = 0.30f;
    matte_l.material = Material::Lambertian;
    matte_l.albedo = Vec3{0.75f, 0.30f, 0.22f};

    Sphere matte_r;
    matte_r.center = Vec3{0.85f, -0.55f, 0.26f};
    matte_r.radius = 0.26f;
    matte_r.material = Material::Lambertian;
    matte_r.albedo = Vec3{0.22f, 0.42f, 0.70f};

    scene.spheres = {mirror, matte_l, matte_r};
    scene.ground_plane = true;
    scene.plane_z = 0.0f;
    scene.plane_radius = 2.1f; // round table top, so every view keeps background
    scene.plane_albedo = Vec3{0.62f, 0.60f, 0.56f};

    env.ambient = Vec3{0.32f, 0.34f, 0.38f};
    env.gradient = Vec3{0.30f, 0.26f, 0.22f};
    env.gradient_dir = Vec3{0.0f, 0.0f, 1.0f};
    env.lobes = {
        EnvMap::Lobe{normalized(Vec3{0.48f, 0.32f, 0.82f}), 0.18f, Vec3{1.9f, 1.7f, 1.3f}},
        EnvMap::Lobe{normalized(Vec3{-0.62f, 0.55f, 0.56f}), 0.30f, Vec3{0.5f, 0.9f, 1.5f}},
        EnvMap::Lobe{normalized(Vec3{0.10f, -0.88f, 0.46f}), 0.24f, Vec3{1.3f, 0.6f, 0.4f}},
        EnvMap::Lobe{normalized(Vec3{-0.40f, -0.35f, -0.85f}), 0.45f, Vec3{0.25f, 0.22f, 0.18f}},
    };
    env.azimuth = 0.0f;
}

const FrameRecord& DatasetManifest::reference_frame() const {
    for (const auto& f : frames)
        if (f.reference) return f;
    throw IoError("manifest has no reference frame");
}

std::vector<const FrameRecord*> DatasetManifest::train_frames() const {
    std::vector<const FrameRecord*> out;
    for (const auto& f : frames)
        if (f.kind == "train") out.push_back(&f);
    return out;
}

std::vector<const FrameRecord*> DatasetManifest::test_frames() const {
    std::vector<const FrameRecord*> out;
    for (const auto& f : frames)
        if (f.kind == "test") out.push_back(&f);
    return out;
}

namespace {

std::string fmt_float(float v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
    return buf;
}

std::string fmt_vec(const Vec3& v) {
    return fmt_float(v.x) + "," + fmt_float(v.y) + "," + fmt_float(v.z);
}

Vec3 parse_vec(const std::string& s) {
    Vec3 v;
    if (std::sscanf(s.c_str(), "%f,%f,%f", &v.x, &v.y, &v.z) != 3)
        throw IoError("bad vector field in manifest: " + s);
    return v;
}

CameraPose sample_pose(Pcg32& rng, const DatasetConfig& cfg) {
    float z = cfg.z_min + (cfg.z_max - cfg.z_min) * rng.next_float();
    float phi = 2.0f * static_cast<float>(M_PI) * rng.next_float();
    float r = cfg.view_radius + cfg.radius_jitter * (2.0f * rng.next_float() - 1.0f);
    float s = std::sqrt(std::max(0.0f, 1.0f - z * z));
    CameraPose pose;
    pose.position = Vec3{r * s * std::cos(phi), r * s * std::sin(phi), r * z};
    pose.target = Vec3{0.0f, 0.0f, 0.45f}; // aim slightly above the table
    pose.up = Vec3{0.0f, 0.0f, 1.0f};
    pose.width = cfg.resolution;
    pose.height = cfg.resolution;
    pose.focal_px = focal_from_fov(cfg.fov_deg, cfg.resolution);
    return pose;
}

void write_frame_images(const std::string& dir, const FrameRecord& rec, const Image& rgb,
                        const Image& mask) {
    write_pfm(dir + "/" + rec.image_pfm, rgb);
    write_png(dir + "/" + rec.image_png, rgb);
    write_png(dir + "/" + rec.mask_png, mask);
}

std::string frame_line(const FrameRecord& f) {
    std::ostringstream os;
    os << "frame kind=" << f.kind << " index=" << f.index << " reference=" << (f.reference ? 1 : 0)
       << " warp_seed=" << f.warp_seed << " env_azimuth=" << fmt_float(f.env_azimuth)
       << " pos=" << fmt_vec(f.pose.position) << " target=" << fmt_vec(f.pose.target)
       << " up=" << fmt_vec(f.pose.up) << " focal_px=" << fmt_float(f.pose.focal_px)
       << " width=" << f.pose.width << " height=" << f.pose.height << " png=" << f.image_png
       << " pfm=" << f.image_pfm << " mask=" << f.mask_png;
    return os.str();
}

}  // namespace

DatasetManifest generate_dataset(const DatasetConfig& cfg, const std::string& out_dir) {
    if (cfg.n_train < 2 || cfg.n_test < 1)
        throw ConfigError("dataset needs n_train >= 2 and n_test >= 1");
    if (cfg.resolution < 8) throw ConfigError("dataset resolution too small");
    cfg.scene.validate();

    fs::create_directories(out_dir);

    DatasetManifest m;
    m.resolution = cfg.resolution;
    m.n_train = cfg.n_train;
    m.n_test = cfg.n_test;
    m.seed = cfg.seed;
    m.eps_rot = cfg.eps_rot;
    m.eps_warp = cfg.eps_warp;
    m.env_desc = "desk-env-v1";
    m.dir = out_dir;

    Pcg32 pose_rng = substream(cfg.seed, "dataset");

    auto make_frame = [&](const char* kind, int idx, bool is_train) {
        FrameRecord f;
        f.kind = kind;
        f.index = idx;
        f.pose = sample_pose(pose_rng, cfg);
        char name[64];
        std::snprintf(name, sizeof(name), "%s_%03d", kind, idx);
        f.image_png = std::string(name) + ".png";
        f.image_pfm = std::string(name) + ".pfm";
        f.mask_png = std::string(name) + "_mask.png";
        if (is_train && idx == 0) {
            f.reference = true;  // the clean output every other frame drifts from
            f.warp_seed = -1;
        } else if (is_train) {
            f.warp_seed = idx;
        } else {
            f.warp_seed = -1;  // held-out views are rendered without drift
        }
        if (cfg.rotate_env_per_image && is_train && idx > 0) {
            Pcg32 az = substream(cfg.seed, "dataset", 1000 + idx);
            f.env_azimuth = 0.15f * (2.0f * az.next_float() - 1.0f);
        }
        return f;
    };

    for (int i = 0; i < cfg.n_train; ++i) m.frames.push_back(make_frame("train", i, true));
    for (int i = 0; i < cfg.n_test; ++i) m.frames.push_back(make_frame("test", i, false));

    for (const auto& f : m.frames) {
        WarpSpec warp;  // identity
        if (f.warp_seed >= 0)
            warp = make_warp(cfg.seed + static_cast<uint64_t>(f.warp_seed), cfg.eps_rot, cfg.eps_warp);
        EnvMap env = cfg.env;
        env.azimuth += f.env_azimuth;
        Image rgb, mask;
        render_view(cfg.scene, env, warp, f.pose, rgb, mask);
        write_frame_images(out_dir, f, rgb, mask);
    }

    std::ostringstream os;
    os << "specrf-dataset v1\n";
    os << "resolution=" << m.resolution << "\n";
    os << "n_train=" << m.n_train << "\n";
    os << "n_test=" << m.n_test << "\n";
    os << "seed=" << m.seed << "\n";
    os << "eps_rot=" << fmt_float(m.eps_rot) << "\n";
    os << "eps_warp=" << fmt_float(m.eps_warp) << "\n";
    os << "env=" << m.env_desc << "\n";
    os << "frames=" << m.frames.size() << "\n";
    for (const auto& f : m.frames) os << frame_line(f) << "\n";

    std::ofstream out(out_dir + "/manifest.txt", std::ios::binary);
    if (!out) throw IoError("cannot write manifest in " + out_dir);
    out << os.str();
    return m;
}

namespace {

// Splits "key=value" tokens; values may not contain spaces (file names and
// comma-joined vectors never do).
bool token_value(const std::string& line, const std::string& key, std::string& out) {
    std::istringstream is(line);
    std::string tok;
    std::string prefix = key + "=";
    while (is >> tok) {
        if (tok.rfind(prefix, 0) == 0) {
            out = tok.substr(prefix.size());
            return true;
        }
    }
    return false;
}

std::string require_token(const std::string& line, const std::string& key) {
    std::string v;
    if (!token_value(line, key, v)) throw IoError("manifest frame line missing '" + key + "'");
    return v;
}

}  // namespace

DatasetManifest load_manifest(const std::string& manifest_path) {
    std::ifstream in(manifest_path, std::ios::binary);
    if (!in) throw IoError("cannot open manifest: " + manifest_path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("specrf-dataset v1", 0) != 0)
        throw IoError("not a dataset manifest: " + manifest_path);

    DatasetManifest m;
    m.dir = fs::path(manifest_path).parent_path().string();
    if (m.dir.empty()) m.dir = ".";

    size_t n_frames = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line.rfind("frame ", 0) == 0) {
            FrameRecord f;
            f.kind = require_token(line, "kind");
            f.index = std::stoi(require_token(line, "index"));
            f.reference = require_token(line, "reference") == "1";
            f.warp_seed = std::stoll(require_token(line, "warp_seed"));
            f.env_azimuth = std::stof(require_token(line, "env_azimuth"));
            f.pose.position = parse_vec(require_token(line, "pos"));
            f.pose.target = parse_vec(require_token(line, "target"));
            f.pose.up = parse_vec(require_token(line, "up"));
            f.pose.focal_px = std::stof(require_token(line, "focal_px"));
            f.pose.width = std::stoi(require_token(line, "width"));
            f.pose.height = std::stoi(require_token(line, "height"));
            f.image_png = require_token(line, "png");
            f.image_pfm = require_token(line, "pfm");
            f.mask_png = require_token(line, "mask");
            m.frames.push_back(std::move(f));
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos) throw IoError("bad manifest line: " + line);
        std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        if (key == "resolution") m.resolution = std::stoi(val);
        else if (key == "n_train") m.n_train = std::stoi(val);
        else if (key == "n_test") m.n_test = std::stoi(val);
        else if (key == "seed") m.seed = std::stoull(val);
        else if (key == "eps_rot") m.eps_rot = std::stof(val);
        else if (key == "eps_warp") m.eps_warp = std::stof(val);
        else if (key == "env") m.env_desc = val;
        else if (key == "frames") n_frames = std::stoul(val);
        else throw IoError("unknown manifest key: " + key);
    }
    if (m.frames.size() != n_frames)
        throw IoError("manifest frame count mismatch in " + manifest_path);
    if (m.resolution <= 0 || m.frames.empty())
        throw IoError("incomplete manifest: " + manifest_path);
    int n_ref = 0;
    for (const auto& f : m.frames) {
        n_ref += f.reference ? 1 : 0;
        if (f.pose.width != m.resolution || f.pose.height != m.resolution)
            throw IoError("manifest mixes resolutions: " + manifest_path);
    }
    if (n_ref != 1) throw IoError("manifest must have exactly one reference frame");
    return m;
}

int boundary_exclusion_radius(int resolution) {
    int r = static_cast<int>(std::lround(7.0 * resolution / 512.0));
    return std::max(r, 1);
}

std::vector<uint8_t> boundary_exclusion_map(const Image& mask, int radius) {
    const int w = mask.width, h = mask.height;
    std::vector<uint8_t> out(static_cast<size_t>(w) * h, 0);
    auto inside = [&](int x, int y) { return mask.at(x, y, 0) > 0.5f; };

    // Multi-source BFS from boundary pixels, chebyshev-free (4-neighbor
    // distance); radius counts BFS rings on either side of the edge.
    std::deque<std::pair<int, int>> queue;
    std::vector<int> dist(static_cast<size_t>(w) * h, -1);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            bool v = inside(x, y);
            bool edge = false;
            if (x > 0 && inside(x - 1, y) != v) edge = true;
            if (!edge && x + 1 < w && inside(x + 1, y) != v) edge = true;
            if (!edge && y > 0 && inside(x, y - 1) != v) edge = true;
            if (!edge && y + 1 < h && inside(x, y + 1) != v) edge = true;
            if (edge) {
                dist[static_cast<size_t>(y) * w + x] = 0;
                queue.emplace_back(x, y);
            }
        }
    }
    while (!queue.empty()) {
        auto [x, y] = queue.front();
        queue.pop_front();
        int d = dist[static_cast<size_t>(y) * w + x];
        if (d >= radius - 1) continue;
        const int nx[4] = {x - 1, x + 1, x, x};
        const int ny[4] = {y, y, y - 1, y + 1};
        for (int k = 0; k < 4; ++k) {
            if (nx[k] < 0 || nx[k] >= w || ny[k] < 0 || ny[k] >= h) continue;
            size_t idx = static_cast<size_t>(ny[k]) * w + nx[k];
            if (dist[idx] < 0) {
                dist[idx] = d + 1;
                queue.emplace_back(nx[k], ny[k]);
            }
        }
    }
    for (size_t i = 0; i < out.size(); ++i) out[i] = dist[i] >= 0 ? 1 : 0;
    return out;
}

std::vector<LoadedView> load_views(const DatasetManifest& manifest, bool train_split) {
    std::vector<LoadedView> views;
    int radius = boundary_exclusion_radius(manifest.resolution);
    for (const auto& f : manifest.frames) {
        if ((f.kind == "train") != train_split) continue;
        LoadedView v;
        v.frame = &f;
        v.rgb = read_pfm(manifest.dir + "/" + f.image_pfm);
        v.mask = read_png(manifest.dir + "/" + f.mask_png);
        if (v.rgb.width != manifest.resolution || v.rgb.height != manifest.resolution)
            throw IoError("frame size mismatch: " + f.image_pfm);
        if (v.mask.width != v.rgb.width || v.mask.height != v.rgb.height)
            throw IoError("mask size mismatch: " + f.mask_png);
        v.excluded = boundary_exclusion_map(v.mask, radius);
        views.push_back(std::move(v));
    }
    return views;
}

}  // namespace specrf
