#pragma once

#include <cstring>
#include <string>
#include <vector>

#include "specrf/common.hpp"
#include "specrf/par.hpp"

namespace specrf {

// Flat float parameter vector with named segments. Every trainable tensor
// (grid levels, network layers, embedding tables) lives in one contiguous
// buffer so the optimizer and checkpoint code can treat it uniformly.
struct ParamSegment {
    std::string name;
    size_t offset = 0;
    size_t size = 0;
};

struct ParamStore {
    std::vector<float> values;
    std::vector<ParamSegment> segments;

    size_t add(const std::string& name, size_t n, float fill = 0.0f) {
        size_t off = values.size();
        segments.push_back({name, off, n});
        values.resize(off + n, fill);
        return off;
    }

    size_t size() const { return values.size(); }

    const ParamSegment& find(const std::string& name) const {
        for (const auto& s : segments)
            if (s.name == name) return s;
        throw ShapeError("parameter segment not found: " + name);
    }

    bool has(const std::string& name) const {
        for (const auto& s : segments)
            if (s.name == name) return true;
        return false;
    }
};

// Per-block gradient buffers. Ray batches are split into fixed-size blocks;
// each block accumulates into its own buffer and blocks are reduced in a
// fixed order, so results are bit-identical for any thread count (including
// the serial reference path).
struct GradBlocks {
    std::vector<std::vector<float>> blocks;

    void resize(int n_blocks, size_t n_params) {
        blocks.resize(n_blocks);
        for (auto& b : blocks) b.assign(n_params, 0.0f);
    }

    void zero() {
        par::parallel_for(static_cast<int64_t>(blocks.size()), [&](int64_t b) {
            std::memset(blocks[b].data(), 0, blocks[b].size() * sizeof(float));
        });
    }

    float* block(int b) { return blocks[b].data(); }

    // out[i] = sum over blocks (fixed block order per element).
    void reduce_into(std::vector<float>& out) const {
        size_t n = out.size();
        constexpr int64_t kChunk = 65536;
        int64_t n_chunks = static_cast<int64_t>((n + kChunk - 1) / kChunk);
        par::parallel_for(n_chunks, [&](int64_t c) {
            size_t lo = static_cast<size_t>(c) * kChunk;
            size_t hi = lo + kChunk < n ? lo + kChunk : n;
            for (size_t i = lo; i < hi; ++i) {
                float acc = 0.0f;
                for (const auto& b : blocks) acc += b[i];
                out[i] = acc;
            }
        });
    }
};

}  // namespace specrf
