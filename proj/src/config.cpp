#include "specrf/config.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "specrf/common.hpp"
#include "specrf/shading.hpp"

namespace specrf {

namespace {

namespace fs = std::filesystem;

std::string trim(std::string_view s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string_view::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return std::string(s.substr(a, b - a + 1));
}

[[noreturn]] void fail(int line_no, const std::string& msg) {
    throw ConfigError("config line " + std::to_string(line_no) + ": " + msg);
}

int to_int(const std::string& v, int line_no) {
    int out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        fail(line_no, "expected an integer, got '" + v + "'");
    return out;
}

uint64_t to_u64(const std::string& v, int line_no) {
    uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        fail(line_no, "expected an unsigned integer, got '" + v + "'");
    return out;
}

float to_float(const std::string& v, int line_no) {
    try {
        size_t used = 0;
        float f = std::stof(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return f;
    } catch (const std::exception&) {
        fail(line_no, "expected a number, got '" + v + "'");
    }
}

bool to_bool(const std::string& v, int line_no) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    fail(line_no, "expected true/false, got '" + v + "'");
}

std::vector<int> to_int_list(const std::string& v, int line_no) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) fail(line_no, "empty entry in list '" + v + "'");
        out.push_back(to_int(item, line_no));
    }
    if (out.empty()) fail(line_no, "expected a comma-separated list, got '" + v + "'");
    return out;
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const std::string& base_dir) {
    RunConfig cfg;
    cfg.source_text = text;
    std::optional<uint64_t> master_seed, explicit_eval_seed;

    using Handler = std::function<void(const std::string&, int)>;
    const std::map<std::string, Handler> keys = {
        // dataset
        {"scene", [&](const std::string& v, int ln) {
             if (v != "desk") fail(ln, "unknown scene '" + v + "' (only 'desk' is built in)");
             cfg.scene = v;
         }},
        {"n_train", [&](const std::string& v, int ln) { cfg.dataset.n_train = to_int(v, ln); }},
        {"n_test", [&](const std::string& v, int ln) { cfg.dataset.n_test = to_int(v, ln); }},
        {"resolution",
         [&](const std::string& v, int ln) { cfg.dataset.resolution = to_int(v, ln); }},
        {"fov_deg", [&](const std::string& v, int ln) { cfg.dataset.fov_deg = to_float(v, ln); }},
        {"view_radius",
         [&](const std::string& v, int ln) { cfg.dataset.view_radius = to_float(v, ln); }},
        {"radius_jitter",
         [&](const std::string& v, int ln) { cfg.dataset.radius_jitter = to_float(v, ln); }},
        {"eps_rot", [&](const std::string& v, int ln) { cfg.dataset.eps_rot = to_float(v, ln); }},
        {"eps_warp", [&](const std::string& v, int ln) { cfg.dataset.eps_warp = to_float(v, ln); }},
        {"rotate_env",
         [&](const std::string& v, int ln) { cfg.dataset.rotate_env_per_image = to_bool(v, ln); }},
        // training loop
        {"iterations", [&](const std::string& v, int ln) { cfg.train.iterations = to_int(v, ln); }},
        {"batch_rays", [&](const std::string& v, int ln) { cfg.train.batch_rays = to_int(v, ln); }},
        {"base_lr", [&](const std::string& v, int ln) { cfg.train.base_lr = to_float(v, ln); }},
        {"lr_warmup", [&](const std::string& v, int ln) { cfg.train.lr_warmup = to_int(v, ln); }},
        {"log_interval",
         [&](const std::string& v, int ln) { cfg.train.log_interval = to_int(v, ln); }},
        {"checkpoint_interval",
         [&](const std::string& v, int ln) { cfg.train.checkpoint_interval = to_int(v, ln); }},
        {"c2f_start", [&](const std::string& v, int ln) { cfg.train.c2f_start = to_int(v, ln); }},
        {"c2f_interval",
         [&](const std::string& v, int ln) { cfg.train.c2f_interval = to_int(v, ln); }},
        {"mode", [&](const std::string& v, int ln) {
             try {
                 cfg.train.mode = embed_mode_from_string(v);
             } catch (const ConfigError& e) {
                 fail(ln, e.what());
             }
         }},
        // field
        {"grid_levels",
         [&](const std::string& v, int ln) { cfg.train.field.resolutions = to_int_list(v, ln); }},
        {"grid_channels",
         [&](const std::string& v, int ln) { cfg.train.field.channels = to_int(v, ln); }},
        {"dense_max_res",
         [&](const std::string& v, int ln) { cfg.train.field.dense_max_res = to_int(v, ln); }},
        {"hash_size_log2",
         [&](const std::string& v, int ln) { cfg.train.field.hash_size_log2 = to_int(v, ln); }},
        {"density_hidden",
         [&](const std::string& v, int ln) { cfg.train.field.density_hidden = to_int(v, ln); }},
        {"density_scale",
         [&](const std::string& v, int ln) { cfg.train.field.density_scale = to_float(v, ln); }},
        // shading
        {"embed_dim",
         [&](const std::string& v, int ln) { cfg.train.shading.embed_dim = to_int(v, ln); }},
        {"perturb_hidden",
         [&](const std::string& v, int ln) { cfg.train.shading.perturb_hidden = to_int(v, ln); }},
        {"color_hidden",
         [&](const std::string& v, int ln) { cfg.train.shading.color_hidden = to_int(v, ln); }},
        // sampler
        {"n_coarse", [&](const std::string& v, int ln) { cfg.train.sampler.n_coarse = to_int(v, ln); }},
        {"n_fine", [&](const std::string& v, int ln) { cfg.train.sampler.n_fine = to_int(v, ln); }},
        {"top_m", [&](const std::string& v, int ln) { cfg.train.sampler.top_m = to_int(v, ln); }},
        {"t_near", [&](const std::string& v, int ln) { cfg.train.sampler.t_near = to_float(v, ln); }},
        {"t_far", [&](const std::string& v, int ln) { cfg.train.sampler.t_far = to_float(v, ln); }},
        // loss
        {"lambda_mask",
         [&](const std::string& v, int ln) { cfg.train.loss.lambda_mask = to_float(v, ln); }},
        {"photometric_weight",
         [&](const std::string& v, int ln) { cfg.train.loss.photometric_weight = to_float(v, ln); }},
        {"tie_weight",
         [&](const std::string& v, int ln) { cfg.train.loss.tie_weight = to_float(v, ln); }},
        {"mask_abs",
         [&](const std::string& v, int ln) { cfg.train.loss.mask_abs = to_bool(v, ln); }},
        // run plumbing (applied after the scan so line order cannot matter)
        {"seed", [&](const std::string& v, int ln) { master_seed = to_u64(v, ln); }},
        {"eval_seed", [&](const std::string& v, int ln) { explicit_eval_seed = to_u64(v, ln); }},
        {"out_dir", [&](const std::string& v, int) { cfg.out_dir = v; }},
        {"data_dir", [&](const std::string& v, int) { cfg.data_dir = v; }},
    };

    std::set<std::string> seen;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = raw;
        if (size_t hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos) fail(line_no, "expected 'key = value', got '" + trim(raw) + "'");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key.empty()) fail(line_no, "empty key");
        if (val.empty()) fail(line_no, "empty value for '" + key + "'");
        auto it = keys.find(key);
        if (it == keys.end()) fail(line_no, "unknown key '" + key + "'");
        if (!seen.insert(key).second) fail(line_no, "duplicate key '" + key + "'");
        it->second(val, line_no);
    }

    if (master_seed) set_run_seed(cfg, *master_seed);
    if (explicit_eval_seed) cfg.eval_seed = *explicit_eval_seed;

    auto resolve = [&](const std::string& p) {
        fs::path fp(p);
        if (fp.is_absolute() || base_dir.empty()) return fp.lexically_normal().string();
        return (fs::path(base_dir) / fp).lexically_normal().string();
    };
    cfg.out_dir = resolve(cfg.out_dir);
    cfg.data_dir = resolve(cfg.data_dir);
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    RunConfig cfg = parse_run_config(ss.str(), fs::path(path).parent_path().string());
    cfg.source_path = path;
    return cfg;
}

void set_run_seed(RunConfig& cfg, uint64_t seed) {
    cfg.dataset.seed = seed;
    cfg.train.seed = seed;
    cfg.eval_seed = seed;
}

void echo_config(const RunConfig& cfg, const std::string& dir) {
    fs::create_directories(dir);
    fs::path dst = fs::path(dir) / "run.cfg";
    std::ofstream out(dst, std::ios::binary);
    if (!out) throw IoError("cannot write " + dst.string());
    out << cfg.source_text;
    if (!out) throw IoError("write failed: " + dst.string());
}

}  // namespace specrf
