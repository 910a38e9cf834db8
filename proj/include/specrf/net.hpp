#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "specrf/params.hpp"
#include "specrf/rng.hpp"
#include "specrf/tape.hpp"

namespace specrf {

// Fully-connected network: ReLU hidden activations, linear output. Layer
// parameters live in a ParamStore; this struct only records layout.
struct NetMeta {
    struct Layer {
        size_t w_off = 0, b_off = 0;
        int n_in = 0, n_out = 0;
    };
    std::vector<Layer> layers;
    std::string name;

    int input_dim() const { return layers.front().n_in; }
    int output_dim() const { return layers.back().n_out; }
};

inline NetMeta net_alloc(ParamStore& store, const std::string& name,
                         const std::vector<int>& dims) {
    if (dims.size() < 2) throw ConfigError("network needs at least one layer: " + name);
    NetMeta meta;
    meta.name = name;
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
        if (dims[l] <= 0 || dims[l + 1] <= 0)
            throw ConfigError("network dims must be positive: " + name);
        NetMeta::Layer lay;
        lay.n_in = dims[l];
        lay.n_out = dims[l + 1];
        lay.w_off = store.add(name + "_w" + std::to_string(l),
                              static_cast<size_t>(lay.n_in) * lay.n_out);
        lay.b_off = store.add(name + "_b" + std::to_string(l), static_cast<size_t>(lay.n_out));
        meta.layers.push_back(lay);
    }
    return meta;
}

// He-uniform hidden layers, Xavier-uniform output layer, zero biases.
inline void net_init(ParamStore& store, const NetMeta& meta, Pcg32& rng) {
    for (size_t l = 0; l < meta.layers.size(); ++l) {
        const auto& lay = meta.layers[l];
        bool last = l + 1 == meta.layers.size();
        float lim = last ? std::sqrt(1.0f / static_cast<float>(lay.n_in))
                         : std::sqrt(6.0f / static_cast<float>(lay.n_in));
        float* w = store.values.data() + lay.w_off;
        size_t n = static_cast<size_t>(lay.n_in) * lay.n_out;
        for (size_t k = 0; k < n; ++k) w[k] = (2.0f * rng.next_float() - 1.0f) * lim;
        float* b = store.values.data() + lay.b_off;
        for (int k = 0; k < lay.n_out; ++k) b[k] = 0.0f;
    }
}

template <class T>
int net_apply(Tape<T>& tape, const NetMeta& meta, int x) {
    int h = x;
    for (size_t l = 0; l < meta.layers.size(); ++l) {
        const auto& lay = meta.layers[l];
        h = tape.affine(h, lay.w_off, lay.b_off, lay.n_in, lay.n_out);
        if (l + 1 < meta.layers.size()) h = tape.relu(h);
    }
    return h;
}

// Convenience wrapper: runs the network on a fixed input, applies a
// scalar-valued closure to the output node, and backpropagates into the
// already-bound tape.pgrad. Returns the loss value.
template <class T, class LossFn>
T forward_backward(Tape<T>& tape, const NetMeta& meta, std::span<const T> input, LossFn&& loss_fn) {
    if (static_cast<int>(input.size()) != meta.input_dim())
        throw ShapeError("network input length " + std::to_string(input.size()) + " != " +
                         std::to_string(meta.input_dim()));
    for (T v : input)
        if (!std::isfinite(v)) throw NumericError("non-finite network input");
    int x = tape.constant(input);
    int out = net_apply(tape, meta, x);
    int loss = loss_fn(tape, out);
    T value = tape.val1(loss);
    if (!std::isfinite(value)) throw NumericError("non-finite loss in forward pass");
    tape.backward(loss);
    return value;
}

}  // namespace specrf
