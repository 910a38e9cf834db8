#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "specrf/grid.hpp"
#include "specrf/net.hpp"
#include "specrf/params.hpp"
#include "specrf/rng.hpp"

namespace specrf {

// Anti-aliasing scale for features queried infinitely far away. The pixel
// cone of a primary ray grows linearly with distance; rdot is that growth
// per unit distance (an isotropic stand-in: pixel side / sqrt(12), doubled
// for the reflected cone). rho_bar adds surface roughness, zero for mirrors.
struct PrefilterParams {
    float gamma = 1.0f;
    float rdot = 0.0f;
    float rho_bar = 0.0f;

    float sigma() const { return 2.0f * gamma * (rdot + rho_bar); }

    static PrefilterParams for_camera(float focal_px) {
        if (focal_px <= 0.0f) throw ConfigError("focal length must be positive");
        PrefilterParams p;
        p.rdot = (2.0f / std::sqrt(12.0f)) / focal_px;
        return p;
    }
};

// Per-feature multiplier erf(1 / (sqrt(8) * nu_l * sigma)) that fades out
// grid levels too fine for the blur scale; sigma = 0 leaves features intact.
// Level-major layout matching gathered features.
inline std::vector<float> erf_attenuation(const GridMeta& grid, const PrefilterParams& pf) {
    std::vector<float> out(static_cast<size_t>(grid.feature_dim()), 1.0f);
    float sigma = pf.sigma();
    if (sigma <= 0.0f) return out;
    for (int l = 0; l < grid.n_levels(); ++l) {
        float f = std::erf(1.0f / (std::sqrt(8.0f) * grid.nu[static_cast<size_t>(l)] * sigma));
        for (int c = 0; c < grid.channels; ++c)
            out[static_cast<size_t>(l) * grid.channels + c] = f;
    }
    return out;
}

struct FieldConfig {
    std::vector<int> resolutions = {16, 32, 64, 128, 256, 512};
    int channels = 4;
    int dense_max_res = 64;
    int hash_size_log2 = 16;
    int density_hidden = 32;
    float density_scale = 20.0f;
};

struct FieldModel {
    GridMeta grid;
    NetMeta density;
    float density_scale = 20.0f;
};

// Softplus preimage: softplus(x) = y  =>  x = log(e^y - 1).
inline float softplus_inverse(float y) { return std::log(std::expm1(y)); }

inline FieldModel build_field_model(ParamStore& store, Pcg32& rng, const FieldConfig& cfg = {}) {
    FieldModel m;
    m.grid = make_grid_meta(store, cfg.resolutions, cfg.channels, cfg.dense_max_res,
                            cfg.hash_size_log2);
    m.density_scale = cfg.density_scale;

    // small random grid features break the cold-start symmetry
    for (const auto& lv : m.grid.levels) {
        float* g = store.values.data() + lv.offset;
        size_t n = lv.vertex_count * static_cast<size_t>(m.grid.channels);
        for (size_t k = 0; k < n; ++k) g[k] = (2.0f * rng.next_float() - 1.0f) * 1e-4f;
    }

    m.density = net_alloc(store, "density", {m.grid.feature_dim(), cfg.density_hidden, 1});
    net_init(store, m.density, rng);

    // start translucent: zero output weights and bias the head so the
    // activated density equals exp(-1) everywhere
    const auto& head = m.density.layers.back();
    float* w = store.values.data() + head.w_off;
    for (int k = 0; k < head.n_in; ++k) w[k] = 0.0f;
    store.values[head.b_off] = softplus_inverse(std::exp(-1.0f)) / m.density_scale;
    return m;
}

// Node handles from one density evaluation. The normal chain reuses them, so
// a single reverse pass covers both the density and its spatial gradient.
struct DensitySample {
    int x = -1;         // constant position node
    int features = -1;  // gathered grid features
    int z = -1;         // scaled pre-activation (softplus input)
    int tau = -1;       // activated density, scalar
    std::vector<int> pre;  // hidden pre-activations, outermost first
};

template <class T>
DensitySample field_density(Tape<T>& tape, const FieldModel& m, const Vec3& x) {
    DensitySample s;
    s.x = tape.constant3(static_cast<T>(x.x), static_cast<T>(x.y), static_cast<T>(x.z));
    s.features = tape.gather(s.x);
    int h = s.features;
    for (size_t l = 0; l < m.density.layers.size(); ++l) {
        const auto& lay = m.density.layers[l];
        int a = tape.affine(h, lay.w_off, lay.b_off, lay.n_in, lay.n_out);
        if (l + 1 < m.density.layers.size()) {
            s.pre.push_back(a);
            h = tape.relu(a);
        } else {
            h = a;
        }
    }
    s.z = tape.scale(h, static_cast<T>(m.density_scale));
    s.tau = tape.softplus(s.z);
    return s;
}

// Density-derived normal -grad(tau)/|grad(tau)|, expressed as a forward
// composition of tape ops (the network's own chain rule written out), so the
// tape's reverse pass differentiates through it like any other subgraph.
// Flag via tape.normalize_flagged(node) when the gradient nearly vanishes.
template <class T>
int field_density_normal(Tape<T>& tape, const FieldModel& m, const DensitySample& s) {
    int u = tape.sigmoid(s.z);  // d softplus(z) / d z
    u = tape.scale(u, static_cast<T>(m.density_scale));
    for (size_t l = m.density.layers.size(); l-- > 0;) {
        const auto& lay = m.density.layers[l];
        u = tape.affine_t(u, lay.w_off, lay.n_out, lay.n_in);
        if (l > 0) u = tape.relu_gate(s.pre[l - 1], u);
    }
    int g = tape.grad_dot(s.x, u);  // (d features / d x)^T u = grad(tau)
    g = tape.scale(g, static_cast<T>(-1));
    return tape.normalize3(g);
}

struct DensityNormalResult {
    float tau = 0.0f;
    Vec3 normal{0.0f, 0.0f, 1.0f};
    bool flagged = false;  // vanishing gradient; normal is the +z default
};

// Plain (non-tape) query for tests and tooling.
inline DensityNormalResult density_and_normal(const FieldModel& m, const ParamStore& store,
                                              const Vec3& x, std::span<const float> level_w) {
    Tape<float> tape;
    tape.params = store.values.data();
    tape.grid = &m.grid;
    tape.level_w = level_w.data();
    DensitySample s = field_density(tape, m, x);
    int n = field_density_normal(tape, m, s);
    DensityNormalResult r;
    r.tau = tape.val1(s.tau);
    auto nv = tape.val(n);
    r.flagged = tape.normalize_flagged(n);
    r.normal = r.flagged ? Vec3{0.0f, 0.0f, 1.0f} : Vec3{nv[0], nv[1], nv[2]};
    return r;
}

}  // namespace specrf
