#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "specrf/array.hpp"
#include "specrf/geometry.hpp"
#include "specrf/scene.hpp"

namespace specrf {

struct DatasetConfig {
    int n_train = 16;
    int n_test = 8;
    int resolution = 64;
    float fov_deg = 40.0f;
    float view_radius = 4.0f;
    float radius_jitter = 0.25f;
    // Camera elevation band (unit-sphere z). Stays above the table plane so
    // the mirror ball is never hidden behind the table rim.
    float z_min = 0.12f;
    float z_max = 0.75f;
    // Per-image warp magnitudes (radians). Calibrated so the mean specular
    // displacement at 64x64 lands mid-way in the 1-4 px band: the mirror
    // ball spans ~14 px, so its reflection sweeps directions at ~0.2 rad/px
    // and pixel-scale drift needs warps of this size.
    float eps_rot = 0.55f;
    float eps_warp = 0.45f;
    bool rotate_env_per_image = false; // optional azimuthal augmentation
    uint64_t seed = 1;

    AnalyticScene scene;
    EnvMap env;

    DatasetConfig();
};

struct FrameRecord {
    std::string kind;  // "train" or "test"
    int index = 0;
    bool reference = false;
    std::string image_png;
    std::string image_pfm;
    std::string mask_png;
    int64_t warp_seed = -1; // -1 means identity warp
    float env_azimuth = 0.0f;
    CameraPose pose;
};

struct DatasetManifest {
    int resolution = 0;
    int n_train = 0;
    int n_test = 0;
    uint64_t seed = 0;
    float eps_rot = 0.0f;
    float eps_warp = 0.0f;
    std::string env_desc;
    std::vector<FrameRecord> frames;
    std::string dir; // directory the manifest lives in; paths are relative to it

    const FrameRecord& reference_frame() const;
    std::vector<const FrameRecord*> train_frames() const;
    std::vector<const FrameRecord*> test_frames() const;
};

// Renders all frames, writes PNG/PFM/mask files plus manifest.txt into
// out_dir, and returns the manifest. Deterministic: identical configs and
// seeds produce byte-identical trees.
DatasetManifest generate_dataset(const DatasetConfig& cfg, const std::string& out_dir);

DatasetManifest load_manifest(const std::string& manifest_path);

// A frame loaded for training: float image (from the PFM), binary mask, and
// the mask-loss exclusion band (1 = skip mask loss at this pixel).
struct LoadedView {
    const FrameRecord* frame = nullptr;
    Image rgb;
    Image mask;
    std::vector<uint8_t> excluded;
};

std::vector<LoadedView> load_views(const DatasetManifest& manifest, bool train_split);

// Exclusion band around mask boundaries: radius round(7 * res / 512), at
// least 1 pixel. Boundary pixels are mask pixels with a 4-neighbor of the
// opposite value.
int boundary_exclusion_radius(int resolution);
std::vector<uint8_t> boundary_exclusion_map(const Image& mask, int radius);

}  // namespace specrf
