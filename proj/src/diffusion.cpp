#include "specrf/diffusion.hpp"

#include <cmath>
#include <string>

namespace specrf {

namespace {

void check_sizes(size_t a, size_t b, const char* what) {
    if (a != b)
        throw ShapeError(std::string(what) + ": operand sizes " + std::to_string(a) +
                         " and " + std::to_string(b) + " disagree");
}

void check_alpha_bar(double abar) {
    if (!(abar >= 0.0) || abar > 1.0)
        throw ConfigError("alpha_bar must lie in [0, 1], got " + std::to_string(abar));
}

}  // namespace

NoiseSchedule make_schedule(int steps, double beta_start, double beta_end) {
    if (steps < 2) throw ConfigError("schedule needs at least two steps");
    if (beta_start <= 0.0 || beta_end >= 1.0 || beta_end <= beta_start)
        throw ConfigError("beta ramp must satisfy 0 < start < end < 1");
    NoiseSchedule s;
    s.beta.resize(static_cast<size_t>(steps));
    s.alpha.resize(static_cast<size_t>(steps));
    s.alpha_bar.resize(static_cast<size_t>(steps));
    double prod = 1.0;
    for (int t = 0; t < steps; ++t) {
        // std::lerp lands on the endpoints exactly.
        double u = static_cast<double>(t) / static_cast<double>(steps - 1);
        double b = std::lerp(beta_start, beta_end, u);
        s.beta[static_cast<size_t>(t)] = b;
        s.alpha[static_cast<size_t>(t)] = 1.0 - b;
        prod *= 1.0 - b;
        s.alpha_bar[static_cast<size_t>(t)] = prod;
    }
    return s;
}

ScheduleValues schedule_values(const NoiseSchedule& s, int t) {
    if (t < 0 || t >= s.steps())
        throw ConfigError("timestep " + std::to_string(t) + " outside [0, " +
                          std::to_string(s.steps()) + ")");
    size_t i = static_cast<size_t>(t);
    return {s.beta[i], s.alpha[i], s.alpha_bar[i]};
}

std::vector<float> noisy_latent(std::span<const float> x0, std::span<const float> eps,
                                double alpha_bar) {
    check_sizes(x0.size(), eps.size(), "noisy_latent");
    check_alpha_bar(alpha_bar);
    double a = std::sqrt(alpha_bar), b = std::sqrt(1.0 - alpha_bar);
    std::vector<float> z(x0.size());
    for (size_t i = 0; i < z.size(); ++i)
        z[i] = static_cast<float>(a * x0[i] + b * eps[i]);
    return z;
}

std::vector<float> velocity(std::span<const float> x0, std::span<const float> eps,
                            double alpha_bar) {
    check_sizes(x0.size(), eps.size(), "velocity");
    check_alpha_bar(alpha_bar);
    double a = std::sqrt(alpha_bar), b = std::sqrt(1.0 - alpha_bar);
    std::vector<float> v(x0.size());
    for (size_t i = 0; i < v.size(); ++i)
        v[i] = static_cast<float>(a * eps[i] - b * x0[i]);
    return v;
}

std::vector<float> recover_x0(std::span<const float> z, std::span<const float> v,
                              double alpha_bar) {
    check_sizes(z.size(), v.size(), "recover_x0");
    check_alpha_bar(alpha_bar);
    double a = std::sqrt(alpha_bar), b = std::sqrt(1.0 - alpha_bar);
    std::vector<float> x0(z.size());
    for (size_t i = 0; i < x0.size(); ++i)
        x0[i] = static_cast<float>(a * z[i] - b * v[i]);
    return x0;
}

std::vector<float> recover_eps(std::span<const float> z, std::span<const float> v,
                               double alpha_bar) {
    check_sizes(z.size(), v.size(), "recover_eps");
    check_alpha_bar(alpha_bar);
    double a = std::sqrt(alpha_bar), b = std::sqrt(1.0 - alpha_bar);
    std::vector<float> eps(z.size());
    for (size_t i = 0; i < eps.size(); ++i)
        eps[i] = static_cast<float>(b * z[i] + a * v[i]);
    return eps;
}

std::vector<float> ddim_step(const NoiseSchedule& s, std::span<const float> z_t,
                             std::span<const float> v_pred, int t, int t_next) {
    check_sizes(z_t.size(), v_pred.size(), "ddim_step");
    if (t_next >= t)
        throw ConfigError("ddim timesteps must decrease: " + std::to_string(t) + " -> " +
                          std::to_string(t_next));
    if (t_next < 0 || t >= s.steps())
        throw ConfigError("ddim timestep pair outside the schedule");
    double abar_t = s.alpha_bar[static_cast<size_t>(t)];
    double abar_n = s.alpha_bar[static_cast<size_t>(t_next)];
    auto x0 = recover_x0(z_t, v_pred, abar_t);
    auto eps = recover_eps(z_t, v_pred, abar_t);
    double a = std::sqrt(abar_n), b = std::sqrt(1.0 - abar_n);
    std::vector<float> z(z_t.size());
    for (size_t i = 0; i < z.size(); ++i)
        z[i] = static_cast<float>(a * x0[i] + b * eps[i]);
    return z;
}

std::vector<int> ddim_timesteps(int n, int total_steps) {
    if (n < 2) throw ConfigError("ddim ladder needs at least two timesteps");
    if (n > total_steps) throw ConfigError("more ddim steps than schedule steps");
    std::vector<int> ts(static_cast<size_t>(n));
    for (int k = 0; k < n; ++k) {
        double u = static_cast<double>(n - 1 - k) / static_cast<double>(n - 1);
        ts[static_cast<size_t>(k)] =
            static_cast<int>(std::lround(u * (total_steps - 1)));
    }
    for (size_t k = 1; k < ts.size(); ++k)
        if (ts[k] >= ts[k - 1]) throw NumericError("ddim ladder is not strictly decreasing");
    return ts;
}

std::vector<float> ddim_sample(const NoiseSchedule& s, std::span<const float> z_init,
                               const VelocityFn& denoiser,
                               std::span<const int> timesteps) {
    if (timesteps.empty()) throw ConfigError("empty ddim ladder");
    std::vector<float> z(z_init.begin(), z_init.end());
    for (size_t k = 0; k + 1 < timesteps.size(); ++k) {
        auto v = denoiser(z, timesteps[k]);
        z = ddim_step(s, z, v, timesteps[k], timesteps[k + 1]);
    }
    int last = timesteps[timesteps.size() - 1];
    auto v = denoiser(z, last);
    return recover_x0(z, v, s.alpha_bar[static_cast<size_t>(last)]);
}

std::vector<float> cfg_combine(std::span<const float> cond, std::span<const float> uncond,
                               float w) {
    check_sizes(cond.size(), uncond.size(), "cfg_combine");
    std::vector<float> out(cond.size());
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = uncond[i] + w * (cond[i] - uncond[i]);
    return out;
}

std::vector<Stage> default_stage_schedule() {
    return {{8, 200000}, {16, 100000}, {32, 50000}, {64, 50000}};
}

void validate_stages(const std::vector<Stage>& stages) {
    if (stages.empty()) throw ConfigError("curriculum needs at least one stage");
    int prev = 0;
    for (const Stage& st : stages) {
        if (st.frames <= prev)
            throw ConfigError("stage frame counts must increase strictly");
        if (st.steps <= 0) throw ConfigError("every stage must run for some steps");
        prev = st.frames;
    }
}

const Stage& stage_at(const std::vector<Stage>& stages, int64_t global_step) {
    validate_stages(stages);
    if (global_step < 0) throw ConfigError("negative training step");
    int64_t acc = 0;
    for (const Stage& st : stages) {
        acc += st.steps;
        if (global_step < acc) return st;
    }
    return stages.back();
}

}  // namespace specrf
