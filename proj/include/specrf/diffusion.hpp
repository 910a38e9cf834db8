#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "specrf/common.hpp"

namespace specrf {

// DDPM-style noise schedule with derived per-step quantities. Everything is
// kept in double: the cumulative alpha product loses digits fast in float
// and downstream samplers are sensitive to it.
struct NoiseSchedule {
    std::vector<double> beta;
    std::vector<double> alpha;      // 1 - beta
    std::vector<double> alpha_bar;  // running product of alpha

    int steps() const { return static_cast<int>(beta.size()); }
};

// Linear beta ramp, endpoints hit exactly.
NoiseSchedule make_schedule(int steps = 1024, double beta_start = 8.5e-4,
                            double beta_end = 1.2e-2);

struct ScheduleValues {
    double beta = 0.0;
    double alpha = 0.0;
    double alpha_bar = 0.0;
};

ScheduleValues schedule_values(const NoiseSchedule& s, int t);

// ---- velocity parameterization ----
// z_t = sqrt(abar) x0 + sqrt(1-abar) eps
// v   = sqrt(abar) eps - sqrt(1-abar) x0
// The pair (z_t, v) is an orthogonal rotation of (x0, eps), so both recovery
// directions are exact inverses.

std::vector<float> noisy_latent(std::span<const float> x0, std::span<const float> eps,
                                double alpha_bar);
std::vector<float> velocity(std::span<const float> x0, std::span<const float> eps,
                            double alpha_bar);
std::vector<float> recover_x0(std::span<const float> z, std::span<const float> v,
                              double alpha_bar);
std::vector<float> recover_eps(std::span<const float> z, std::span<const float> v,
                               double alpha_bar);

// Deterministic (eta = 0) DDIM update from timestep t to t_next < t.
std::vector<float> ddim_step(const NoiseSchedule& s, std::span<const float> z_t,
                             std::span<const float> v_pred, int t, int t_next);

// Uniform DDIM timestep ladder from steps-1 down to 0, inclusive.
std::vector<int> ddim_timesteps(int n, int total_steps = 1024);

// Runs the ladder with a caller-supplied v-predictor and finishes by
// recovering x0 at the last timestep.
using VelocityFn = std::function<std::vector<float>(std::span<const float> z, int t)>;
std::vector<float> ddim_sample(const NoiseSchedule& s, std::span<const float> z_init,
                               const VelocityFn& denoiser,
                               std::span<const int> timesteps);

// ---- classifier-free guidance ----

struct GuidanceConfig {
    float weight = 3.0f;
    bool drop_reference = false;  // unconditional variant for CFG training
};

// uncond + w * (cond - uncond)
std::vector<float> cfg_combine(std::span<const float> cond, std::span<const float> uncond,
                               float w);

// ---- staged frame-count curriculum ----

struct Stage {
    int frames = 0;
    int64_t steps = 0;
};

// 8 frames for 200K steps, then 16/100K, 32/50K, 64/50K.
std::vector<Stage> default_stage_schedule();

// Frame counts must increase strictly and every stage must run.
void validate_stages(const std::vector<Stage>& stages);

// Stage active at a global step (stages concatenated in order).
const Stage& stage_at(const std::vector<Stage>& stages, int64_t global_step);

}  // namespace specrf
