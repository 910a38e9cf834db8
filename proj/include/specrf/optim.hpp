#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "specrf/common.hpp"
#include "specrf/par.hpp"

namespace specrf {

struct AdamState {
    std::vector<float> m, v;
    int64_t step = 0;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;

    explicit AdamState(size_t n = 0) : m(n, 0.0f), v(n, 0.0f) {}
};

// Standard Adam with bias correction. Single writer; parallelism is per
// parameter (each element's update is independent, so chunking never changes
// results).
inline void adam_step(std::vector<float>& params, const std::vector<float>& grads,
                      AdamState& st, float lr) {
    if (lr <= 0.0f) throw ConfigError("learning rate must be positive");
    if (params.size() != grads.size() || params.size() != st.m.size())
        throw ShapeError("adam buffers disagree with parameter count");
    st.step += 1;
    float b1 = st.beta1, b2 = st.beta2;
    float c1 = 1.0f - std::pow(b1, static_cast<float>(st.step));
    float c2 = 1.0f - std::pow(b2, static_cast<float>(st.step));
    float* p = params.data();
    float* m = st.m.data();
    float* v = st.v.data();
    const float* g = grads.data();
    float eps = st.eps;
    size_t n = params.size();
    constexpr int64_t kChunk = 65536;
    int64_t n_chunks = static_cast<int64_t>((n + kChunk - 1) / kChunk);
    par::parallel_for(n_chunks, [&](int64_t c) {
        size_t lo = static_cast<size_t>(c) * kChunk;
        size_t hi = lo + kChunk < n ? lo + kChunk : n;
        for (size_t i = lo; i < hi; ++i) {
            m[i] = b1 * m[i] + (1.0f - b1) * g[i];
            v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
            float mh = m[i] / c1;
            float vh = v[i] / c2;
            p[i] -= lr * mh / (std::sqrt(vh) + eps);
        }
    });
}

// Linear warmup to base_lr, then log-linear decay to base_lr/100 at `total`.
inline float lr_schedule(int step, int total, float base_lr, int warmup) {
    if (warmup > total) throw ConfigError("warmup exceeds total steps");
    if (step < 0 || step > total) throw ConfigError("step outside [0, total]");
    if (step < warmup)
        return base_lr * static_cast<float>(step) / static_cast<float>(warmup);
    if (total == warmup) return base_lr;
    float t = static_cast<float>(step - warmup) / static_cast<float>(total - warmup);
    return base_lr * std::pow(0.01f, t);
}

}  // namespace specrf
