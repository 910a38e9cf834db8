#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "specrf/array.hpp"
#include "specrf/field.hpp"
#include "specrf/geometry.hpp"
#include "specrf/shading.hpp"

namespace specrf {

struct SamplerConfig {
    int n_coarse = 64;
    int n_fine = 64;
    float t_near = 0.3f;
    float t_far = 8.0f;
    int top_m = 24;  // samples per ray that get full shading
    int unscented_k = 5;
    float spread = 0.0f;
};

struct LossConfig {
    float lambda_mask = 0.01f;
    float photometric_weight = 1.0f;
    float tie_weight = 0.1f;
    // The opacity penalty is squared by default; the signed residual printed
    // in the source equation is not a usable loss, so the absolute-value
    // reading stays behind this switch.
    bool mask_abs = false;
};

// Read-only bundle of everything needed to evaluate the model.
struct ModelView {
    const FieldModel* field = nullptr;
    const ShadingModel* shading = nullptr;
    EmbedMode mode = EmbedMode::Shading;
    const float* params = nullptr;
    std::span<const float> level_w;
};

// ---- sampling ----

inline std::vector<float> stratified_ts(Pcg32& rng, const SamplerConfig& cfg) {
    if (cfg.n_coarse < 1) throw ConfigError("need at least one coarse sample");
    if (cfg.t_far <= cfg.t_near || cfg.t_near < 0.0f) throw ConfigError("bad ray range");
    std::vector<float> ts(static_cast<size_t>(cfg.n_coarse));
    float w = (cfg.t_far - cfg.t_near) / static_cast<float>(cfg.n_coarse);
    for (int i = 0; i < cfg.n_coarse; ++i)
        ts[static_cast<size_t>(i)] = cfg.t_near + (static_cast<float>(i) + rng.next_float()) * w;
    return ts;
}

// Quadrature weights from densities, independent of the tape implementation
// (doubles as its oracle in tests): w_i = T_i (1 - exp(-tau_i delta_i)).
inline std::vector<float> quadrature_weights(std::span<const float> taus,
                                             std::span<const float> ts, float t_far) {
    if (taus.size() != ts.size() || ts.empty()) throw ShapeError("weights need matched samples");
    std::vector<float> w(taus.size());
    double acc = 0.0;
    for (size_t i = 0; i < taus.size(); ++i) {
        float right = i + 1 < ts.size() ? ts[i + 1] : t_far;
        double a = static_cast<double>(taus[i]) * static_cast<double>(right - ts[i]);
        w[i] = static_cast<float>(std::exp(-acc) * (-std::expm1(-a)));
        acc += a;
    }
    return w;
}

// Piecewise-constant inverse-CDF resampling over the intervals between the
// existing samples; mass proportional to weight + 1e-4 so empty space keeps
// a floor of exploration.
inline std::vector<float> resample_ts(std::span<const float> ts, std::span<const float> w,
                                      float t_far, int n, Pcg32& rng) {
    if (ts.empty() || w.size() != ts.size()) throw ShapeError("resample needs matched samples");
    if (n < 1) throw ConfigError("need at least one fine sample");
    size_t S = ts.size();
    std::vector<double> cdf(S + 1, 0.0);
    for (size_t i = 0; i < S; ++i) cdf[i + 1] = cdf[i] + static_cast<double>(w[i]) + 1e-4;
    double total = cdf[S];
    std::vector<float> out(static_cast<size_t>(n));
    size_t k = 0;
    for (int j = 0; j < n; ++j) {
        double u = (static_cast<double>(j) + rng.next_double()) / n * total;
        while (k + 1 < S && cdf[k + 1] < u) ++k;
        double left = ts[k];
        double right = k + 1 < S ? ts[k + 1] : t_far;
        double frac = (u - cdf[k]) / (cdf[k + 1] - cdf[k]);
        out[static_cast<size_t>(j)] = static_cast<float>(left + frac * (right - left));
    }
    return out;
}

// Sorted union with a minimum separation (degenerate intervals break the
// quadrature's delta > 0 invariant).
inline std::vector<float> merge_ts(std::span<const float> a, std::span<const float> b,
                                   float min_gap = 1e-5f) {
    std::vector<float> all(a.begin(), a.end());
    all.insert(all.end(), b.begin(), b.end());
    std::sort(all.begin(), all.end());
    std::vector<float> out;
    out.reserve(all.size());
    for (float t : all)
        if (out.empty() || t - out.back() >= min_gap) out.push_back(t);
    return out;
}

// Densities along a ray without gradients (proposal pass).
inline std::vector<float> ray_densities(const ModelView& mv, const Ray& ray,
                                        std::span<const float> ts) {
    Tape<float> tape;
    tape.params = mv.params;
    tape.grid = &mv.field->grid;
    tape.level_w = mv.level_w.data();
    std::vector<float> taus(ts.size());
    for (size_t i = 0; i < ts.size(); ++i) {
        Vec3 x = contract(ray.origin + ray.dir * ts[i]);
        taus[i] = tape.val1(field_density(tape, *mv.field, x).tau);
    }
    return taus;
}

// Coarse stratified pass, weight-proportional fine pass, sorted union.
inline std::vector<float> sample_ray_ts(const ModelView& mv, const Ray& ray,
                                        const SamplerConfig& cfg, Pcg32& rng) {
    auto coarse = stratified_ts(rng, cfg);
    auto taus = ray_densities(mv, ray, coarse);
    auto w = quadrature_weights(taus, coarse, cfg.t_far);
    auto fine = resample_ts(coarse, w, cfg.t_far, cfg.n_fine, rng);
    return merge_ts(coarse, fine);
}

// ---- per-ray graph ----

struct RayGraph {
    int taus = -1;
    int weights = -1;
    int opacity = -1;  // scalar: sum of all weights
    int rgb = -1;      // shaded colors plus white remainder
    int tie = -1;      // scalar: sum of w_i * tie_i over shaded samples
    int n_samples = 0;
    int n_shaded = 0;
    int n_flagged = 0;  // shaded samples whose density normal was degenerate
    std::vector<int> shaded;      // sample indices, heaviest first
    std::vector<Vec3> env_points;  // contracted env lookup per shaded sample
};

// Tapes one ray end to end: densities -> quadrature weights -> shading of
// the heaviest samples -> white-background composite. The tape must already
// be bound (params, grid, level_w). Unshaded weight falls back to white, so
// the composite stays a convex combination of sample colors and white.
template <class T>
RayGraph build_ray(Tape<T>& tape, const ShadingModel& shading, EmbedMode mode, int image,
                   const Ray& ray, std::span<const float> ts, const SamplerConfig& cfg,
                   std::span<const float> attenuation, const FieldModel& field) {
    if (ts.empty()) throw ShapeError("ray needs at least one sample");
    RayGraph g;
    g.n_samples = static_cast<int>(ts.size());

    std::vector<DensitySample> samples;
    samples.reserve(ts.size());
    std::vector<int> tau_ids;
    tau_ids.reserve(ts.size());
    std::vector<T> deltas;
    deltas.reserve(ts.size());
    for (size_t i = 0; i < ts.size(); ++i) {
        Vec3 x = contract(ray.origin + ray.dir * ts[i]);
        samples.push_back(field_density(tape, field, x));
        tau_ids.push_back(samples.back().tau);
        float right = i + 1 < ts.size() ? ts[i + 1] : cfg.t_far;
        deltas.push_back(static_cast<T>(right - ts[i]));
    }
    g.taus = tape.pack(tau_ids);
    g.weights = tape.render_weights(g.taus, deltas);
    g.opacity = tape.sum(g.weights);

    // selection by forward value; ties broken by index so runs are stable
    auto wv = tape.val(g.weights);
    std::vector<int> order(ts.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (wv[static_cast<size_t>(a)] != wv[static_cast<size_t>(b)])
            return wv[static_cast<size_t>(a)] > wv[static_cast<size_t>(b)];
        return a < b;
    });
    int m = std::min<int>(cfg.top_m, static_cast<int>(ts.size()));
    g.n_shaded = m;

    int rgb = -1, wsum = -1, tie_sum = -1;
    for (int j = 0; j < m; ++j) {
        int i = order[static_cast<size_t>(j)];
        g.shaded.push_back(i);
        const DensitySample& s = samples[static_cast<size_t>(i)];
        int nd = field_density_normal(tape, field, s);
        if (tape.normalize_flagged(nd)) ++g.n_flagged;
        int np = perturbed_normal_node(tape, shading, s.features, image, mode);
        int tie = tie_penalty_node(tape, np, nd);
        int fe = reflected_env_node(tape, np, ray.dir, attenuation, cfg.spread,
                                    cfg.unscented_k);
        {
            auto nv = tape.val(np);
            Vec3 n{static_cast<float>(nv[0]), static_cast<float>(nv[1]),
                   static_cast<float>(nv[2])};
            Vec3 r = ray.dir - n * (2.0f * dot(ray.dir, n));
            g.env_points.push_back(contract(r * 2.0f));
        }
        int c = shaded_color_node(tape, shading, s.features, np, fe, image, mode);
        int wi = tape.slice(g.weights, i, 1);
        int term = tape.vscale(c, wi);
        rgb = rgb < 0 ? term : tape.add(rgb, term);
        wsum = wsum < 0 ? wi : tape.add(wsum, wi);
        int wt = tape.mul(wi, tie);
        tie_sum = tie_sum < 0 ? wt : tape.add(tie_sum, wt);
    }
    int white = tape.constant3(T(1), T(1), T(1));
    int rem = tape.sub(tape.constant1(T(1)), wsum);
    g.rgb = tape.add(rgb, tape.vscale(white, rem));
    g.tie = tie_sum;
    return g;
}

// Combined per-ray objective as a scalar node.
template <class T>
int ray_loss_node(Tape<T>& tape, const RayGraph& g, const Vec3& gt, float alpha,
                  bool excluded, const LossConfig& cfg) {
    int diff = tape.sub(g.rgb, tape.constant3(static_cast<T>(gt.x), static_cast<T>(gt.y),
                                              static_cast<T>(gt.z)));
    int loss = tape.scale(tape.dot(diff, diff),
                          static_cast<T>(cfg.photometric_weight) / T(3));
    if (!excluded && cfg.lambda_mask > 0.0f) {
        int e = tape.sub(g.opacity, tape.constant1(static_cast<T>(alpha)));
        int pen;
        if (cfg.mask_abs) {
            T sgn = tape.val1(e) >= T(0) ? T(1) : T(-1);
            pen = tape.scale(e, sgn);
        } else {
            pen = tape.mul(e, e);
        }
        loss = tape.add(loss, tape.scale(pen, static_cast<T>(cfg.lambda_mask)));
    }
    if (cfg.tie_weight > 0.0f) {
        loss = tape.add(loss, tape.scale(g.tie, static_cast<T>(cfg.tie_weight)));
    }
    return loss;
}

// ---- plain loss helpers ----

inline float mask_loss(float opacity, float alpha, bool excluded, const LossConfig& cfg) {
    if (excluded) return 0.0f;
    float e = opacity - alpha;
    return cfg.lambda_mask * (cfg.mask_abs ? std::fabs(e) : e * e);
}

inline float photometric_loss(std::span<const float> pred, std::span<const float> gt) {
    if (pred.size() != gt.size()) throw ShapeError("photometric operands disagree");
    if (pred.empty()) throw ShapeError("photometric loss of nothing");
    double acc = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        double d = static_cast<double>(pred[i]) - static_cast<double>(gt[i]);
        acc += d * d;
    }
    return static_cast<float>(acc / static_cast<double>(pred.size()));
}

inline Vec3 composite_white(std::span<const float> w, std::span<const Vec3> c) {
    if (w.size() != c.size()) throw ShapeError("composite operands disagree");
    Vec3 out{0.0f, 0.0f, 0.0f};
    float total = 0.0f;
    for (size_t i = 0; i < w.size(); ++i) {
        out = out + c[i] * w[i];
        total += w[i];
    }
    return out + Vec3{1.0f, 1.0f, 1.0f} * (1.0f - total);
}

// ---- whole-ray and whole-image evaluation ----

struct RayResult {
    Vec3 rgb{1.0f, 1.0f, 1.0f};
    float opacity = 0.0f;
};

inline RayResult render_ray(const ModelView& mv, int image, const Ray& ray,
                            const SamplerConfig& cfg, std::span<const float> attenuation,
                            Pcg32& rng) {
    auto ts = sample_ray_ts(mv, ray, cfg, rng);
    Tape<float> tape;
    tape.params = mv.params;
    tape.grid = &mv.field->grid;
    tape.level_w = mv.level_w.data();
    RayGraph g = build_ray(tape, *mv.shading, mv.mode, image, ray, ts, cfg, attenuation,
                           *mv.field);
    auto rv = tape.val(g.rgb);
    return {Vec3{rv[0], rv[1], rv[2]}, tape.val1(g.opacity)};
}

// Deterministic image render: per-pixel substreams make the result
// independent of scheduling, and the same seed reproduces it bit for bit.
Image render_image(const ModelView& mv, int image, const CameraPose& pose,
                   const SamplerConfig& cfg, uint64_t seed);

}  // namespace specrf
