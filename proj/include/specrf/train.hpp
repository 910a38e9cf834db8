#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "specrf/dataset.hpp"
#include "specrf/optim.hpp"
#include "specrf/params.hpp"
#include "specrf/render.hpp"

namespace specrf {

struct TrainConfig {
    int iterations = 4000;
    int batch_rays = 128;
    float base_lr = 5e-3f;
    int lr_warmup = 256;
    int log_interval = 50;
    int checkpoint_interval = 1000;
    // Coarse-to-fine grid unlock: all-coarse for c2f_start steps, then one
    // finer level fades in per c2f_interval steps.
    int c2f_start = 16;
    int c2f_interval = 50;
    EmbedMode mode = EmbedMode::Shading;
    uint64_t seed = 1;

    FieldConfig field;
    ShadingConfig shading;
    SamplerConfig sampler;
    LossConfig loss;
};

struct ModelState {
    ParamStore store;
    FieldModel field;
    ShadingModel shading;
    EmbedMode mode = EmbedMode::Shading;
    AdamState adam;
    int64_t step = 0;
    int n_images = 0;

    // Scratch reused across steps; never serialized.
    GradBlocks grad_blocks;
    std::vector<float> grad;

    ModelView view(std::span<const float> level_w) const {
        return ModelView{&field, &shading, mode, store.values.data(), level_w};
    }
};

struct LossBreakdown {
    float photometric = 0.0f;
    float mask = 0.0f;
    float tie = 0.0f;
    float total = 0.0f;
};

// One ray of a training batch: which view and which pixel.
struct RayPick {
    int view = 0;
    int x = 0;
    int y = 0;
};

ModelState init_model(const TrainConfig& cfg, int n_images);

// Uniform over (view, pixel); deterministic in (seed, step).
std::vector<RayPick> draw_batch(uint64_t seed, int64_t step, int n_views, int width,
                                int height, int n);

// One Adam update from an explicit batch. Deterministic and independent of
// the execution mode. Throws NumericError with the offending ray's context
// if any loss term comes out non-finite.
LossBreakdown train_step(ModelState& state, const std::vector<LoadedView>& views,
                         std::span<const RayPick> batch, const TrainConfig& cfg);

// Draws the batch for the current step, then updates.
LossBreakdown train_step(ModelState& state, const std::vector<LoadedView>& views,
                         const TrainConfig& cfg);

// Full training loop: runs cfg.iterations steps, appends a CSV log row every
// log_interval steps, checkpoints periodically (atomic rename) plus once at
// the end. resume_path, when nonempty, restores step/parameters/optimizer
// state before continuing; an interrupted-and-resumed run matches an
// uninterrupted one bit for bit.
ModelState fit(const DatasetManifest& manifest, const TrainConfig& cfg,
               const std::string& out_dir, const std::string& resume_path = "");

// Renders an arbitrary pose with the reference image's embedding row
// (index 0); all grid levels active. Mode none has no rows to pick.
Image render_novel(const ModelState& state, const CameraPose& pose,
                   const SamplerConfig& sampler, uint64_t seed);

// ---- checkpoints ----

// Binary container: magic, format version, embed mode, step counters, then
// every parameter segment plus Adam moments as named float blocks. Writes go
// to a temp file first and rename into place.
void save_checkpoint(const std::string& path, const ModelState& state);

// Restores into a state built by init_model with the same config; block
// names and sizes must match exactly.
void load_checkpoint(const std::string& path, ModelState& state);

}  // namespace specrf
