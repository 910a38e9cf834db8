#include "specrf/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "specrf/par.hpp"

namespace specrf {

namespace {

constexpr int kRayBlock = 16;

void validate(const TrainConfig& cfg) {
    if (cfg.iterations < 1) throw ConfigError("iterations must be positive");
    if (cfg.batch_rays < 1) throw ConfigError("batch must hold at least one ray");
    if (cfg.base_lr <= 0.0f) throw ConfigError("learning rate must be positive");
    if (cfg.lr_warmup < 0 || cfg.lr_warmup > cfg.iterations)
        throw ConfigError("warmup outside [0, iterations]");
    if (cfg.log_interval < 1) throw ConfigError("log interval must be positive");
    if (cfg.checkpoint_interval < 1) throw ConfigError("checkpoint interval must be positive");
    if (cfg.c2f_start < 0 || cfg.c2f_interval < 1)
        throw ConfigError("bad coarse-to-fine schedule");
}

struct RayEval {
    LossBreakdown loss;
    bool finite = true;
};

// Forward+backward for one training ray; gradients land in tape.pgrad.
RayEval eval_ray(const ModelState& state, const ModelView& mv, const LoadedView& view,
                 const RayPick& pick, const TrainConfig& cfg,
                 std::span<const float> attenuation, float grad_scale, Tape<float>& tape,
                 Pcg32& rng) {
    Ray ray = view.frame->pose.pixel_ray(static_cast<float>(pick.x),
                                         static_cast<float>(pick.y));
    auto ts = sample_ray_ts(mv, ray, cfg.sampler, rng);

    RayGraph g = build_ray(tape, state.shading, state.mode, pick.view, ray, ts,
                           cfg.sampler, attenuation, state.field);
    Vec3 gt{view.rgb.at(pick.x, pick.y, 0), view.rgb.at(pick.x, pick.y, 1),
            view.rgb.at(pick.x, pick.y, 2)};
    float alpha = view.mask.at(pick.x, pick.y, 0);
    bool excluded =
        view.excluded[static_cast<size_t>(pick.y) * view.rgb.width + pick.x] != 0;
    int loss = ray_loss_node(tape, g, gt, alpha, excluded, cfg.loss);

    RayEval ev;
    auto rv = tape.val(g.rgb);
    float d0 = rv[0] - gt.x, d1 = rv[1] - gt.y, d2 = rv[2] - gt.z;
    ev.loss.photometric =
        cfg.loss.photometric_weight * (d0 * d0 + d1 * d1 + d2 * d2) / 3.0f;
    ev.loss.mask = mask_loss(tape.val1(g.opacity), alpha, excluded, cfg.loss);
    ev.loss.tie = cfg.loss.tie_weight * tape.val1(g.tie);
    ev.loss.total = tape.val1(loss);
    ev.finite = std::isfinite(ev.loss.total) && std::isfinite(ev.loss.photometric) &&
                std::isfinite(ev.loss.mask) && std::isfinite(ev.loss.tie);
    if (ev.finite) tape.backward(loss, grad_scale);
    return ev;
}

}  // namespace

ModelState init_model(const TrainConfig& cfg, int n_images) {
    validate(cfg);
    if (n_images < 1) throw ConfigError("model needs at least one image");
    ModelState st;
    st.mode = cfg.mode;
    st.n_images = n_images;
    Pcg32 rng = substream(cfg.seed, "init");
    st.field = build_field_model(st.store, rng, cfg.field);
    st.shading = build_shading_model(st.store, rng, n_images, st.field.grid.feature_dim(),
                                     cfg.shading, cfg.mode != EmbedMode::None);
    st.adam = AdamState(st.store.size());
    return st;
}

std::vector<RayPick> draw_batch(uint64_t seed, int64_t step, int n_views, int width,
                                int height, int n) {
    if (n_views < 1 || width < 1 || height < 1 || n < 1)
        throw ConfigError("empty batch domain");
    Pcg32 rng = substream(seed, "batch", static_cast<uint64_t>(step));
    std::vector<RayPick> out(static_cast<size_t>(n));
    for (auto& p : out) {
        p.view = static_cast<int>(rng.next_below(static_cast<uint32_t>(n_views)));
        uint32_t px = rng.next_below(static_cast<uint32_t>(width) *
                                     static_cast<uint32_t>(height));
        p.x = static_cast<int>(px % static_cast<uint32_t>(width));
        p.y = static_cast<int>(px / static_cast<uint32_t>(width));
    }
    return out;
}

LossBreakdown train_step(ModelState& state, const std::vector<LoadedView>& views,
                         std::span<const RayPick> batch, const TrainConfig& cfg) {
    validate(cfg);
    if (views.empty()) throw ShapeError("no training views");
    if (batch.empty()) throw ShapeError("empty ray batch");
    for (const RayPick& p : batch) {
        if (p.view < 0 || p.view >= static_cast<int>(views.size()))
            throw ShapeError("batch view index out of range");
        const Image& im = views[static_cast<size_t>(p.view)].rgb;
        if (p.x < 0 || p.x >= im.width || p.y < 0 || p.y >= im.height)
            throw ShapeError("batch pixel out of range");
    }
    if (static_cast<int>(views.size()) > state.n_images)
        throw ShapeError("more views than embedding rows");

    int L = state.field.grid.n_levels();
    auto lw = coarse_to_fine_weights(static_cast<int>(state.step), cfg.c2f_start,
                                     cfg.c2f_interval, L);
    ModelView mv = state.view(lw);

    std::vector<std::vector<float>> atten(views.size());
    for (size_t v = 0; v < views.size(); ++v)
        atten[v] = erf_attenuation(state.field.grid,
                                   PrefilterParams::for_camera(views[v].frame->pose.focal_px));

    int n = static_cast<int>(batch.size());
    int n_blocks = (n + kRayBlock - 1) / kRayBlock;
    state.grad_blocks.resize(n_blocks, state.store.size());
    state.grad_blocks.zero();
    float grad_scale = 1.0f / static_cast<float>(n);

    // Per-block partial sums keep the reduction order fixed, so serial and
    // parallel runs agree bitwise.
    std::vector<double> part(static_cast<size_t>(n_blocks) * 4, 0.0);
    std::vector<int> bad(static_cast<size_t>(n_blocks), -1);
    std::vector<LossBreakdown> bad_loss(static_cast<size_t>(n_blocks));
    std::vector<std::string> block_err(static_cast<size_t>(n_blocks));

    par::parallel_for(n_blocks, [&](int64_t b) {
        Tape<float> tape;
        tape.params = state.store.values.data();
        tape.pgrad = state.grad_blocks.block(static_cast<int>(b));
        tape.grid = &state.field.grid;
        tape.level_w = lw.data();
        double* acc = part.data() + static_cast<size_t>(b) * 4;
        int lo = static_cast<int>(b) * kRayBlock;
        int hi = std::min(n, lo + kRayBlock);
        for (int j = lo; j < hi; ++j) {
            const RayPick& pick = batch[static_cast<size_t>(j)];
            Pcg32 rng = substream(cfg.seed, "ray", static_cast<uint64_t>(state.step),
                                  static_cast<uint64_t>(j));
            tape.reset();
            RayEval ev;
            try {
                ev = eval_ray(state, mv, views[static_cast<size_t>(pick.view)], pick, cfg,
                              atten[static_cast<size_t>(pick.view)], grad_scale, tape, rng);
            } catch (const std::exception& e) {
                bad[static_cast<size_t>(b)] = j;
                block_err[static_cast<size_t>(b)] = e.what();
                return;
            }
            if (!ev.finite) {
                bad[static_cast<size_t>(b)] = j;
                bad_loss[static_cast<size_t>(b)] = ev.loss;
                return;
            }
            acc[0] += ev.loss.photometric;
            acc[1] += ev.loss.mask;
            acc[2] += ev.loss.tie;
            acc[3] += ev.loss.total;
        }
    });

    for (int b = 0; b < n_blocks; ++b) {
        if (bad[static_cast<size_t>(b)] < 0) continue;
        int j = bad[static_cast<size_t>(b)];
        const RayPick& p = batch[static_cast<size_t>(j)];
        std::ostringstream msg;
        msg << "training aborted at step " << state.step << ": ray " << j << " of "
            << n << " (view " << p.view << ", pixel " << p.x << "," << p.y << ")";
        if (!block_err[static_cast<size_t>(b)].empty()) {
            msg << " failed: " << block_err[static_cast<size_t>(b)];
        } else {
            const LossBreakdown& l = bad_loss[static_cast<size_t>(b)];
            msg << " produced a non-finite loss (photometric " << l.photometric
                << ", mask " << l.mask << ", tie " << l.tie << ", total " << l.total
                << ")";
        }
        msg << "; reproduce with seed " << cfg.seed << ", step " << state.step;
        throw NumericError(msg.str());
    }

    state.grad.assign(state.store.size(), 0.0f);
    state.grad_blocks.reduce_into(state.grad);
    for (size_t i = 0; i < state.grad.size(); ++i) {
        if (std::isfinite(state.grad[i])) continue;
        // Catch the explosion before the optimizer writes poisoned parameters.
        std::string where;
        for (const ParamSegment& seg : state.store.segments)
            if (i >= seg.offset && i < seg.offset + seg.size) {
                where = " in segment '" + seg.name + "'";
                break;
            }
        throw NumericError("non-finite gradient at step " + std::to_string(state.step) +
                           where + "; reproduce with seed " + std::to_string(cfg.seed));
    }

    float lr = lr_schedule(static_cast<int>(state.step) + 1, cfg.iterations, cfg.base_lr,
                           cfg.lr_warmup);
    adam_step(state.store.values, state.grad, state.adam, lr);
    state.step += 1;

    LossBreakdown out;
    double tot[4] = {0.0, 0.0, 0.0, 0.0};
    for (int b = 0; b < n_blocks; ++b)
        for (int k = 0; k < 4; ++k) tot[k] += part[static_cast<size_t>(b) * 4 + k];
    out.photometric = static_cast<float>(tot[0] / n);
    out.mask = static_cast<float>(tot[1] / n);
    out.tie = static_cast<float>(tot[2] / n);
    out.total = static_cast<float>(tot[3] / n);
    return out;
}

LossBreakdown train_step(ModelState& state, const std::vector<LoadedView>& views,
                         const TrainConfig& cfg) {
    if (views.empty()) throw ShapeError("no training views");
    auto batch = draw_batch(cfg.seed, state.step, static_cast<int>(views.size()),
                            views[0].rgb.width, views[0].rgb.height, cfg.batch_rays);
    return train_step(state, views, batch, cfg);
}

ModelState fit(const DatasetManifest& manifest, const TrainConfig& cfg,
               const std::string& out_dir, const std::string& resume_path) {
    validate(cfg);
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    auto views = load_views(manifest, true);
    ModelState state = init_model(cfg, static_cast<int>(views.size()));
    if (!resume_path.empty()) load_checkpoint(resume_path, state);

    std::string log_path = out_dir + "/train_log.csv";
    bool append = !resume_path.empty() && fs::exists(log_path);
    std::ofstream log(log_path, append ? std::ios::app : std::ios::trunc);
    if (!log) throw IoError("cannot open " + log_path);
    int L = state.field.grid.n_levels();
    if (!append) {
        log << "step,lr,photometric,mask,tie,total";
        for (int l = 0; l < L; ++l) log << ",lw" << l;
        log << "\n";
    }

    std::string ckpt_path = out_dir + "/checkpoint.srf";
    while (state.step < cfg.iterations) {
        int64_t s = state.step;
        auto lw = coarse_to_fine_weights(static_cast<int>(s), cfg.c2f_start,
                                         cfg.c2f_interval, L);
        LossBreakdown loss = train_step(state, views, cfg);
        if (state.step % cfg.log_interval == 0) {
            float lr = lr_schedule(static_cast<int>(s) + 1, cfg.iterations, cfg.base_lr,
                                   cfg.lr_warmup);
            log << state.step << ',' << lr << ',' << loss.photometric << ',' << loss.mask
                << ',' << loss.tie << ',' << loss.total;
            for (int l = 0; l < L; ++l) log << ',' << lw[static_cast<size_t>(l)];
            log << '\n';
            log.flush();
        }
        if (state.step % cfg.checkpoint_interval == 0 || state.step == cfg.iterations)
            save_checkpoint(ckpt_path, state);
    }
    return state;
}

Image render_novel(const ModelState& state, const CameraPose& pose,
                   const SamplerConfig& sampler, uint64_t seed) {
    std::vector<float> lw(static_cast<size_t>(state.field.grid.n_levels()), 1.0f);
    ModelView mv = state.view(lw);
    return render_image(mv, 0, pose, sampler, seed);
}

}  // namespace specrf
