// Timing harness for the OpenMP kernels against their serial twins. Every
// kernel is written to be bit-identical in both modes; this binary measures
// the speedup and verifies the equality on real work.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <deque>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "specrf/par.hpp"
#include "specrf/render.hpp"
#include "specrf/train.hpp"

using namespace specrf;

namespace {

std::vector<LoadedView> orbit_views(int n, int res) {
    static std::deque<FrameRecord> pool;
    size_t base = pool.size();
    for (int i = 0; i < n; ++i) {
        FrameRecord fr;
        fr.kind = "train";
        fr.index = i;
        fr.reference = i == 0;
        float th = 2.0f * 3.14159265f * static_cast<float>(i) / static_cast<float>(n);
        fr.pose.position = {3.0f * std::cos(th), 3.0f * std::sin(th), 1.2f};
        fr.pose.target = {0.0f, 0.0f, 0.0f};
        fr.pose.up = {0.0f, 0.0f, 1.0f};
        fr.pose.focal_px = focal_from_fov(50.0f, res);
        fr.pose.width = res;
        fr.pose.height = res;
        pool.push_back(fr);
    }
    std::vector<LoadedView> views(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        LoadedView& v = views[static_cast<size_t>(i)];
        v.frame = &pool[base + static_cast<size_t>(i)];
        v.rgb = Image(res, res, 3);
        v.mask = Image(res, res, 1);
        for (int y = 0; y < res; ++y)
            for (int x = 0; x < res; ++x) {
                v.rgb.at(x, y, 0) = static_cast<float>(x) / static_cast<float>(res);
                v.rgb.at(x, y, 1) = static_cast<float>(y) / static_cast<float>(res);
                v.rgb.at(x, y, 2) = 0.5f;
                float cx = x - 0.5f * static_cast<float>(res), cy = y - 0.5f * static_cast<float>(res);
                v.mask.at(x, y, 0) =
                    cx * cx + cy * cy < 0.16f * static_cast<float>(res * res) ? 1.0f : 0.0f;
            }
        v.excluded.assign(static_cast<size_t>(res) * static_cast<size_t>(res), 0);
    }
    return views;
}

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

template <class Fn>
double time_ms(int reps, Fn&& fn) {
    fn();  // warm-up
    double t0 = now_ms();
    for (int r = 0; r < reps; ++r) fn();
    return (now_ms() - t0) / reps;
}

struct Case {
    const char* name;
    double serial_ms;
    double parallel_ms;
    bool identical;
};

void print_case(const Case& c) {
    std::printf("%-28s serial %9.2f ms   parallel %9.2f ms   speedup %5.2fx   identical: %s\n",
                c.name, c.serial_ms, c.parallel_ms, c.serial_ms / c.parallel_ms,
                c.identical ? "yes" : "NO");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"serial vs OpenMP benchmark"};
    int steps = 10;
    int res = 64;
    std::string size = "desk";
    app.add_option("--steps", steps, "training steps per timing (default 10)");
    app.add_option("--res", res, "render resolution (default 64)");
    app.add_option("--size", size, "model size: desk|full")
        ->check(CLI::IsMember({"desk", "full"}));
    CLI11_PARSE(app, argc, argv);

    TrainConfig cfg;
    cfg.seed = 7;
    if (size == "desk") {
        cfg.field.resolutions = {16, 32, 64, 128};
        cfg.field.channels = 2;
        cfg.field.density_hidden = 16;
        cfg.shading.embed_dim = 8;
        cfg.shading.perturb_hidden = 32;
        cfg.shading.color_hidden = 32;
        cfg.sampler.n_coarse = 32;
        cfg.sampler.n_fine = 32;
        cfg.sampler.top_m = 12;
    }
    auto views = orbit_views(8, res);

    std::printf("threads: %d, model: %s, batch: %d rays, %d+%d samples/ray\n",
                par::thread_count(), size.c_str(), cfg.batch_rays, cfg.sampler.n_coarse,
                cfg.sampler.n_fine);

    // Image render: embarrassingly parallel over pixels, per-pixel RNG
    // substreams keep the output scheduling-independent.
    ModelState rs = init_model(cfg, static_cast<int>(views.size()));
    std::vector<float> lw(static_cast<size_t>(rs.field.grid.n_levels()), 1.0f);
    Image img_serial, img_parallel;
    par::set_exec_mode(par::Exec::Serial);
    double rser = time_ms(2, [&] {
        img_serial = render_image(rs.view(lw), 0, views[0].frame->pose, cfg.sampler, 5);
    });
    par::set_exec_mode(par::Exec::Parallel);
    double rpar = time_ms(2, [&] {
        img_parallel = render_image(rs.view(lw), 0, views[0].frame->pose, cfg.sampler, 5);
    });
    Case render_case{"render_image", rser, rpar,
                     img_serial.data.size() == img_parallel.data.size() &&
                         std::memcmp(img_serial.data.data(), img_parallel.data.data(),
                                     img_serial.data.size() * sizeof(float)) == 0};
    print_case(render_case);

    // Training step: per-block gradient buffers merged in block order, so the
    // two modes must produce bit-identical parameters after any number of
    // steps, not merely close ones.
    par::set_exec_mode(par::Exec::Serial);
    ModelState ts = init_model(cfg, static_cast<int>(views.size()));
    double tser = time_ms(steps, [&] { train_step(ts, views, cfg); });

    par::set_exec_mode(par::Exec::Parallel);
    ModelState tp = init_model(cfg, static_cast<int>(views.size()));
    double tpar = time_ms(steps, [&] { train_step(tp, views, cfg); });

    bool same = ts.step == tp.step &&
                std::memcmp(ts.store.values.data(), tp.store.values.data(),
                            ts.store.values.size() * sizeof(float)) == 0;
    Case train_case{"train_step", tser, tpar, same};
    print_case(train_case);

    if (!render_case.identical || !train_case.identical) {
        std::fprintf(stderr, "serial and parallel results diverged\n");
        return 1;
    }
    return 0;
}
