#pragma once

#include <string>
#include <vector>

#include "specrf/array.hpp"
#include "specrf/dataset.hpp"
#include "specrf/train.hpp"

namespace specrf {

// Peak signal-to-noise ratio in dB over all pixels and channels. Identical
// images are reported as 99 dB so CSV reports stay finite.
float psnr(const Image& pred, const Image& gt, float max_val = 1.0f);

// Mean local SSIM with the standard 11x11 Gaussian window (sigma 1.5,
// K1 = 0.01, K2 = 0.03, dynamic range 1). Multi-channel images are reduced
// to grayscale by channel mean first; windows must fit inside the image.
float ssim(const Image& pred, const Image& gt);

struct EvalRow {
    std::string name;
    float psnr = 0.0f;
    float ssim = 0.0f;
};

struct EvalReport {
    std::vector<EvalRow> rows;  // one per test view
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    std::string fingerprint;  // hash of the model/eval configuration
    double runtime_sec = 0.0;

    // Header, one row per view, final mean row.
    std::string to_csv() const;
};

// Renders every test view with the reference image's embedding (test frames
// never received rows of their own) and scores each render against the
// stored float image over the full frame, white background included.
EvalReport evaluate(const ModelState& state, const DatasetManifest& manifest,
                    const SamplerConfig& sampler, uint64_t seed);

void write_report(const EvalReport& report, const std::string& csv_path);

}  // namespace specrf
