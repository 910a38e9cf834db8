#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "specrf/common.hpp"
#include "specrf/params.hpp"

namespace specrf {

// Smooth map compressing all of space into the open ball of radius 2:
// identity inside the unit ball, x -> (2 - 1/|x|) * x/|x| outside. Internal
// math in double so float call sites keep full single precision.
template <class T>
void contract_point(const T x[3], T out[3]) {
    double n2 = static_cast<double>(x[0]) * x[0] + static_cast<double>(x[1]) * x[1] +
                static_cast<double>(x[2]) * x[2];
    if (n2 <= 1.0) {
        out[0] = x[0];
        out[1] = x[1];
        out[2] = x[2];
        return;
    }
    double n = std::sqrt(n2);
    double s = (2.0 - 1.0 / n) / n;
    out[0] = static_cast<T>(s * x[0]);
    out[1] = static_cast<T>(s * x[1]);
    out[2] = static_cast<T>(s * x[2]);
}

inline Vec3 contract(const Vec3& v) {
    float in[3] = {v.x, v.y, v.z};
    float out[3];
    contract_point(in, out);
    return {out[0], out[1], out[2]};
}

// Contraction image of a point infinitely far along unit direction d: 2*d.
inline Vec3 distant_point(const Vec3& d) {
    if (!nearly_unit(d, 1e-3f))
        throw NumericError("distant_point requires a unit direction");
    return d * 2.0f;
}

// One multiresolution feature level. Levels at or below the dense threshold
// store a full res^3 vertex grid; finer levels use an open-addressed hash of
// fixed size (spatial hash with the usual large-prime mixing), which keeps
// the parameter count bounded while preserving trilinear interpolation.
struct GridLevelMeta {
    int res = 0;
    bool dense = true;
    size_t offset = 0;      // float offset of this level's table in the store
    uint32_t hash_mask = 0; // table_size - 1 for hashed levels
    size_t vertex_count = 0;
};

struct GridMeta {
    std::vector<GridLevelMeta> levels;
    int channels = 0;
    float half_extent = 2.0f; // grids cover [-2,2]^3, the contraction ball
    std::vector<float> nu;    // per-level scale: the level's resolution

    int n_levels() const { return static_cast<int>(levels.size()); }
    int feature_dim() const { return n_levels() * channels; }
};

inline uint32_t grid_hash(int ix, int iy, int iz, uint32_t mask) {
    uint32_t h = static_cast<uint32_t>(ix) ^
                 (static_cast<uint32_t>(iy) * 2654435761u) ^
                 (static_cast<uint32_t>(iz) * 805459861u);
    return h & mask;
}

inline size_t grid_vertex_index(const GridLevelMeta& lv, int ix, int iy, int iz) {
    if (lv.dense)
        return (static_cast<size_t>(iz) * lv.res + iy) * lv.res + ix;
    return grid_hash(ix, iy, iz, lv.hash_mask);
}

inline GridMeta make_grid_meta(ParamStore& store, const std::vector<int>& resolutions,
                               int channels, int dense_max_res, int hash_size_log2) {
    GridMeta meta;
    meta.channels = channels;
    int prev = 0;
    for (int res : resolutions) {
        if (res <= prev) throw ConfigError("grid resolutions must be strictly increasing");
        prev = res;
        GridLevelMeta lv;
        lv.res = res;
        lv.dense = res <= dense_max_res;
        lv.vertex_count = lv.dense ? static_cast<size_t>(res) * res * res
                                   : (size_t{1} << hash_size_log2);
        lv.hash_mask = lv.dense ? 0 : static_cast<uint32_t>(lv.vertex_count - 1);
        lv.offset = store.add("grid_l" + std::to_string(meta.levels.size()),
                              lv.vertex_count * channels);
        meta.levels.push_back(lv);
        meta.nu.push_back(static_cast<float>(res));
    }
    return meta;
}

// Per-corner interpolation state for one level, recomputed on demand (cheaper
// than storing it on the tape).
template <class T>
struct CellCoords {
    int i0[3];
    T frac[3];
    T dscale; // d(frac)/d(x): (res-1) / (2*half_extent), 0 if clamped
};

template <class T>
inline CellCoords<T> cell_coords(const GridMeta& meta, const GridLevelMeta& lv, const T x[3]) {
    CellCoords<T> cc;
    T he = T(meta.half_extent);
    T scale = T(lv.res - 1) / (T(2) * he);
    cc.dscale = scale;
    for (int k = 0; k < 3; ++k) {
        T u = (x[k] + he) * scale;
        if (u <= T(0)) {
            cc.i0[k] = 0;
            cc.frac[k] = T(0);
        } else if (u >= T(lv.res - 1)) {
            cc.i0[k] = lv.res - 2;
            cc.frac[k] = T(1);
        } else {
            T fl = std::floor(u);
            cc.i0[k] = static_cast<int>(fl);
            cc.frac[k] = u - fl;
        }
    }
    return cc;
}

// Trilinear gather over all levels: out[l*C + c], each level scaled by
// level_w[l]. A level with weight exactly 0 is skipped and contributes zeros.
template <class T>
void grid_gather(const GridMeta& meta, const T* params, const T x[3],
                 const T* level_w, T* out) {
    int C = meta.channels;
    for (int l = 0; l < meta.n_levels(); ++l) {
        T lw = level_w[l];
        T* o = out + static_cast<size_t>(l) * C;
        for (int c = 0; c < C; ++c) o[c] = T(0);
        if (lw == T(0)) continue;
        const GridLevelMeta& lv = meta.levels[l];
        CellCoords<T> cc = cell_coords(meta, lv, x);
        for (int corner = 0; corner < 8; ++corner) {
            int bx = corner & 1, by = (corner >> 1) & 1, bz = (corner >> 2) & 1;
            T w = (bx ? cc.frac[0] : T(1) - cc.frac[0]) *
                  (by ? cc.frac[1] : T(1) - cc.frac[1]) *
                  (bz ? cc.frac[2] : T(1) - cc.frac[2]);
            if (w == T(0)) continue;
            size_t vi = grid_vertex_index(lv, cc.i0[0] + bx, cc.i0[1] + by, cc.i0[2] + bz);
            const T* cell = params + lv.offset + vi * C;
            T wl = w * lw;
            for (int c = 0; c < C; ++c) o[c] += wl * cell[c];
        }
    }
}

// Backward of grid_gather: scatters into parameter gradients and (optionally)
// accumulates d(out)/d(x)^T * gout into gx.
template <class T>
void grid_gather_backward(const GridMeta& meta, const T* params, const T x[3],
                          const T* level_w, const T* gout, T* pgrad, T* gx) {
    int C = meta.channels;
    for (int l = 0; l < meta.n_levels(); ++l) {
        T lw = level_w[l];
        if (lw == T(0)) continue;
        const T* go = gout + static_cast<size_t>(l) * C;
        const GridLevelMeta& lv = meta.levels[l];
        CellCoords<T> cc = cell_coords(meta, lv, x);
        T wx[2] = {T(1) - cc.frac[0], cc.frac[0]};
        T wy[2] = {T(1) - cc.frac[1], cc.frac[1]};
        T wz[2] = {T(1) - cc.frac[2], cc.frac[2]};
        for (int corner = 0; corner < 8; ++corner) {
            int bx = corner & 1, by = (corner >> 1) & 1, bz = (corner >> 2) & 1;
            size_t vi = grid_vertex_index(lv, cc.i0[0] + bx, cc.i0[1] + by, cc.i0[2] + bz);
            size_t base = lv.offset + vi * C;
            T w = wx[bx] * wy[by] * wz[bz];
            if (pgrad && w != T(0)) {
                T wl = w * lw;
                for (int c = 0; c < C; ++c) pgrad[base + c] += wl * go[c];
            }
            if (gx) {
                const T* cell = params + base;
                T dot_gc = T(0);
                for (int c = 0; c < C; ++c) dot_gc += go[c] * cell[c];
                dot_gc *= lw * cc.dscale;
                T sx = (bx ? T(1) : T(-1)) * wy[by] * wz[bz];
                T sy = (by ? T(1) : T(-1)) * wx[bx] * wz[bz];
                T sz = (bz ? T(1) : T(-1)) * wx[bx] * wy[by];
                gx[0] += dot_gc * sx;
                gx[1] += dot_gc * sy;
                gx[2] += dot_gc * sz;
            }
        }
    }
}

// out[k] = sum_l lw_l * d/dx_k (sum_c interp_l(x)_c * p[l*C+c]).
// This is the spatial-gradient/vector contraction used to express density
// normals as a forward composition, so plain reverse mode can differentiate
// it with respect to both the grid values and p.
template <class T>
void grid_grad_dot(const GridMeta& meta, const T* params, const T x[3],
                   const T* level_w, const T* p, T out[3]) {
    out[0] = out[1] = out[2] = T(0);
    int C = meta.channels;
    for (int l = 0; l < meta.n_levels(); ++l) {
        T lw = level_w[l];
        if (lw == T(0)) continue;
        const T* pl = p + static_cast<size_t>(l) * C;
        const GridLevelMeta& lv = meta.levels[l];
        CellCoords<T> cc = cell_coords(meta, lv, x);
        T wx[2] = {T(1) - cc.frac[0], cc.frac[0]};
        T wy[2] = {T(1) - cc.frac[1], cc.frac[1]};
        T wz[2] = {T(1) - cc.frac[2], cc.frac[2]};
        T ls = lw * cc.dscale;
        for (int corner = 0; corner < 8; ++corner) {
            int bx = corner & 1, by = (corner >> 1) & 1, bz = (corner >> 2) & 1;
            size_t vi = grid_vertex_index(lv, cc.i0[0] + bx, cc.i0[1] + by, cc.i0[2] + bz);
            const T* cell = params + lv.offset + vi * C;
            T cp = T(0);
            for (int c = 0; c < C; ++c) cp += cell[c] * pl[c];
            cp *= ls;
            out[0] += cp * (bx ? T(1) : T(-1)) * wy[by] * wz[bz];
            out[1] += cp * (by ? T(1) : T(-1)) * wx[bx] * wz[bz];
            out[2] += cp * (bz ? T(1) : T(-1)) * wx[bx] * wy[by];
        }
    }
}

// Backward of grid_grad_dot w.r.t. grid values and p (x is treated as a
// constant; sample positions are not differentiated through this op).
template <class T>
void grid_grad_dot_backward(const GridMeta& meta, const T* params, const T x[3],
                            const T* level_w, const T* p, const T gout[3],
                            T* pgrad, T* gp) {
    int C = meta.channels;
    for (int l = 0; l < meta.n_levels(); ++l) {
        T lw = level_w[l];
        if (lw == T(0)) continue;
        const T* pl = p + static_cast<size_t>(l) * C;
        T* gpl = gp ? gp + static_cast<size_t>(l) * C : nullptr;
        const GridLevelMeta& lv = meta.levels[l];
        CellCoords<T> cc = cell_coords(meta, lv, x);
        T wx[2] = {T(1) - cc.frac[0], cc.frac[0]};
        T wy[2] = {T(1) - cc.frac[1], cc.frac[1]};
        T wz[2] = {T(1) - cc.frac[2], cc.frac[2]};
        T ls = lw * cc.dscale;
        for (int corner = 0; corner < 8; ++corner) {
            int bx = corner & 1, by = (corner >> 1) & 1, bz = (corner >> 2) & 1;
            size_t vi = grid_vertex_index(lv, cc.i0[0] + bx, cc.i0[1] + by, cc.i0[2] + bz);
            size_t base = lv.offset + vi * C;
            T gw = ls * ((bx ? T(1) : T(-1)) * wy[by] * wz[bz] * gout[0] +
                         (by ? T(1) : T(-1)) * wx[bx] * wz[bz] * gout[1] +
                         (bz ? T(1) : T(-1)) * wx[bx] * wy[by] * gout[2]);
            if (gw == T(0)) continue;
            const T* cell = params + base;
            if (pgrad)
                for (int c = 0; c < C; ++c) pgrad[base + c] += gw * pl[c];
            if (gpl)
                for (int c = 0; c < C; ++c) gpl[c] += gw * cell[c];
        }
    }
}

// Level annealing: the m coarsest levels are always on; level l >= m ramps
// linearly from 0 to 1 over steps [(l-m)*s, (l-m+1)*s].
inline std::vector<float> coarse_to_fine_weights(int step, int m, int s, int L) {
    if (L <= 0) throw ConfigError("level count must be positive");
    if (m <= 0 || s <= 0) throw ConfigError("annealing constants must be positive");
    if (step < 0) throw ConfigError("step must be non-negative");
    std::vector<float> w(static_cast<size_t>(L));
    for (int l = 0; l < L; ++l) {
        if (l < m) {
            w[l] = 1.0f;
        } else {
            float r = (static_cast<float>(step) - static_cast<float>(l - m) * s) / s;
            w[l] = r < 0.0f ? 0.0f : (r > 1.0f ? 1.0f : r);
        }
    }
    return w;
}

}  // namespace specrf
