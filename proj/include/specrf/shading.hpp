#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "specrf/field.hpp"
#include "specrf/net.hpp"
#include "specrf/params.hpp"

namespace specrf {

// Which slot the per-image embedding row feeds. All modes share one code
// path; the unused slot is zero-filled, so None is the exact shared-solution
// special case of either embedding variant.
enum class EmbedMode { None, Appearance, Shading };

inline EmbedMode embed_mode_from_string(const std::string& s) {
    if (s == "none") return EmbedMode::None;
    if (s == "appearance") return EmbedMode::Appearance;
    if (s == "shading") return EmbedMode::Shading;
    throw ConfigError("unknown embedding mode: " + s);
}

inline const char* embed_mode_name(EmbedMode m) {
    switch (m) {
        case EmbedMode::None: return "none";
        case EmbedMode::Appearance: return "appearance";
        default: return "shading";
    }
}

struct ShadingConfig {
    int embed_dim = 32;
    int perturb_hidden = 128;  // three hidden layers of this width
    int color_hidden = 64;     // two hidden layers
    int unscented_k = 5;
    float unscented_spread = 0.0f;  // mirror material: no roughness cone
};

struct ShadingModel {
    NetMeta perturb;  // concat(features, embed) -> 3-vector, pre-normalize
    NetMeta color;    // concat(features, normal, envfeat, embed) -> RGB logits
    size_t embed_off = 0;
    bool has_table = true;  // mode none trains without any embedding rows
    int n_images = 0;
    int embed_dim = 32;
    int feature_dim = 0;

    size_t embed_row(int image) const {
        if (!has_table) throw ConfigError("model has no embedding table");
        if (image < 0 || image >= n_images) throw ShapeError("embedding row out of range");
        return embed_off + static_cast<size_t>(image) * embed_dim;
    }
};

inline ShadingModel build_shading_model(ParamStore& store, Pcg32& rng, int n_images,
                                        int feature_dim, const ShadingConfig& cfg = {},
                                        bool with_table = true) {
    if (n_images <= 0) throw ConfigError("shading model needs at least one image");
    ShadingModel m;
    m.n_images = n_images;
    m.embed_dim = cfg.embed_dim;
    m.feature_dim = feature_dim;
    m.has_table = with_table;
    // zero-initialized rows: training starts from the shared solution
    if (with_table)
        m.embed_off = store.add("embed", static_cast<size_t>(n_images) * cfg.embed_dim, 0.0f);
    m.perturb = net_alloc(store, "perturb",
                          {feature_dim + cfg.embed_dim, cfg.perturb_hidden, cfg.perturb_hidden,
                           cfg.perturb_hidden, 3});
    net_init(store, m.perturb, rng);
    m.color = net_alloc(store, "color",
                        {feature_dim + 3 + feature_dim + cfg.embed_dim, cfg.color_hidden,
                         cfg.color_hidden, 3});
    net_init(store, m.color, rng);
    return m;
}

// Center direction plus (K-1)/2 symmetric tangent-offset pairs at the given
// angular spread. The pairwise symmetry keeps the set's mean aligned with
// the center, which is what the averaged distant feature relies on.
inline std::vector<Vec3> unscented_directions(const Vec3& d, float spread, int k) {
    if (k < 1) throw ConfigError("unscented set needs at least one direction");
    if (k > 1 && k % 2 == 0) throw ConfigError("unscented set must be odd: center plus pairs");
    std::vector<Vec3> dirs;
    dirs.reserve(static_cast<size_t>(k));
    dirs.push_back(d);
    if (k == 1 || spread == 0.0f) {
        dirs.resize(static_cast<size_t>(k), d);
        return dirs;
    }
    // tangent frame: steadiest axis first
    Vec3 h = std::fabs(d.x) <= std::fabs(d.y) && std::fabs(d.x) <= std::fabs(d.z)
                 ? Vec3{1.0f, 0.0f, 0.0f}
                 : (std::fabs(d.y) <= std::fabs(d.z) ? Vec3{0.0f, 1.0f, 0.0f}
                                                     : Vec3{0.0f, 0.0f, 1.0f});
    Vec3 t1 = normalized(cross(d, h));
    Vec3 t2 = normalized(cross(d, t1));
    float c = std::cos(spread), s = std::sin(spread);
    std::vector<Vec3> tangents{t1, t2};
    int pairs = (k - 1) / 2;
    for (int p = 0; p < pairs; ++p) {
        const Vec3& t = tangents[static_cast<size_t>(p) % tangents.size()];
        dirs.push_back(normalized(d * c + t * s));
        dirs.push_back(normalized(d * c - t * s));
    }
    dirs.resize(static_cast<size_t>(k));
    return dirs;
}

// Averaged distant feature: mean of grid features at the contraction-sphere
// points 2*d_j, each level faded by its erf attenuation factor.
template <class T>
int env_feature_node(Tape<T>& tape, std::span<const Vec3> dirs,
                     std::span<const float> attenuation) {
    if (dirs.empty()) throw ShapeError("environment feature needs directions");
    int acc = -1;
    for (const Vec3& d : dirs) {
        Vec3 p = contract(distant_point(d));
        int x = tape.constant3(static_cast<T>(p.x), static_cast<T>(p.y), static_cast<T>(p.z));
        int f = tape.gather(x);
        acc = acc < 0 ? f : tape.add(acc, f);
    }
    acc = tape.scale(acc, static_cast<T>(1.0 / static_cast<double>(dirs.size())));
    std::vector<T> coeff(attenuation.begin(), attenuation.end());
    return tape.mul_vec(acc, std::span<const T>(coeff.data(), coeff.size()));
}

// Environment feature whose lookup point follows the normal: the reflection
// of the view direction, pushed to the contraction sphere and gathered with
// a position-differentiable node, so embedding gradients flow through the
// whole chain. With spread > 0 the off-center probes of the unscented set
// enter at their forward values only (the center carries the gradient).
template <class T>
int reflected_env_node(Tape<T>& tape, int normal, const Vec3& view_dir,
                       std::span<const float> attenuation, float spread = 0.0f, int k = 1) {
    int d = tape.constant3(static_cast<T>(view_dir.x), static_cast<T>(view_dir.y),
                           static_cast<T>(view_dir.z));
    int dn = tape.dot(d, normal);
    int refl = tape.sub(d, tape.vscale(normal, tape.scale(dn, T(2))));
    int acc = tape.gather_pos(tape.contract_map(tape.scale(refl, T(2))));
    if (k > 1 && spread > 0.0f) {
        auto rv = tape.val(refl);
        Vec3 center = normalized(Vec3{static_cast<float>(rv[0]), static_cast<float>(rv[1]),
                                      static_cast<float>(rv[2])});
        auto dirs = unscented_directions(center, spread, k);
        for (size_t j = 1; j < dirs.size(); ++j) {
            Vec3 p = contract(distant_point(dirs[j]));
            int xj = tape.constant3(static_cast<T>(p.x), static_cast<T>(p.y),
                                    static_cast<T>(p.z));
            acc = tape.add(acc, tape.gather(xj));
        }
        acc = tape.scale(acc, T(1) / T(k));
    }
    std::vector<T> coeff(attenuation.begin(), attenuation.end());
    return tape.mul_vec(acc, std::span<const T>(coeff.data(), coeff.size()));
}

// Per-image perturbed normal: normalize(MLP(f(x), v_i)). The embedding row
// participates only in Shading mode; other modes feed zeros so the network
// shapes stay identical.
template <class T>
int perturbed_normal_node(Tape<T>& tape, const ShadingModel& m, int features, int image,
                          EmbedMode mode) {
    int embed = mode == EmbedMode::Shading
                    ? tape.param(m.embed_row(image), m.embed_dim)
                    : tape.zeros(m.embed_dim);
    int input = tape.concat(features, embed);
    int raw = net_apply(tape, m.perturb, input);
    return tape.normalize3(raw);
}

// View-direction-free color head: sigmoid(MLP(f(x), n, fbar, appearance)).
template <class T>
int shaded_color_node(Tape<T>& tape, const ShadingModel& m, int features, int normal,
                      int envfeat, int image, EmbedMode mode) {
    int embed = mode == EmbedMode::Appearance
                    ? tape.param(m.embed_row(image), m.embed_dim)
                    : tape.zeros(m.embed_dim);
    int input = tape.concat(tape.concat(features, normal), tape.concat(envfeat, embed));
    int logits = net_apply(tape, m.color, input);
    return tape.sigmoid(logits);
}

// 1 - dot(n_perturbed, n_density). Differentiates through both normals (the
// density chain included); a flagged degenerate density normal masks the
// sample's penalty entirely.
template <class T>
int tie_penalty_node(Tape<T>& tape, int n_perturbed, int n_density) {
    if (tape.normalize_flagged(n_density)) return tape.constant1(T(0));
    int one = tape.constant1(T(1));
    return tape.sub(one, tape.dot(n_perturbed, n_density));
}

inline float tie_penalty(const Vec3& n_perturbed, const Vec3& n_density) {
    return 1.0f - dot(n_perturbed, n_density);
}

}  // namespace specrf
