#include "specrf/metrics.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "specrf/common.hpp"
#include "specrf/par.hpp"
#include "specrf/render.hpp"
#include "specrf/rng.hpp"

namespace specrf {

namespace {

void check_shapes(const Image& a, const Image& b, const char* what) {
    if (a.width != b.width || a.height != b.height || a.channels != b.channels)
        throw ShapeError(std::string(what) + ": shape mismatch (" + std::to_string(a.width) +
                         "x" + std::to_string(a.height) + "x" + std::to_string(a.channels) +
                         " vs " + std::to_string(b.width) + "x" + std::to_string(b.height) + "x" +
                         std::to_string(b.channels) + ")");
}

constexpr int kWin = 11;
constexpr float kSsimSigma = 1.5f;
constexpr float kC1 = 0.01f * 0.01f;  // (K1 * L)^2, L = 1
constexpr float kC2 = 0.03f * 0.03f;  // (K2 * L)^2

const std::array<double, kWin * kWin>& ssim_window() {
    static const std::array<double, kWin * kWin> w = [] {
        std::array<double, kWin * kWin> out{};
        double sum = 0.0;
        for (int y = 0; y < kWin; ++y)
            for (int x = 0; x < kWin; ++x) {
                double dx = x - (kWin - 1) / 2.0, dy = y - (kWin - 1) / 2.0;
                double v = std::exp(-(dx * dx + dy * dy) / (2.0 * kSsimSigma * kSsimSigma));
                out[static_cast<size_t>(y * kWin + x)] = v;
                sum += v;
            }
        for (double& v : out) v /= sum;
        return out;
    }();
    return w;
}

std::vector<float> to_gray(const Image& im) {
    std::vector<float> g(static_cast<size_t>(im.width) * static_cast<size_t>(im.height));
    for (int y = 0; y < im.height; ++y)
        for (int x = 0; x < im.width; ++x) {
            float s = 0.0f;
            for (int c = 0; c < im.channels; ++c) s += im.at(x, y, c);
            g[static_cast<size_t>(y) * static_cast<size_t>(im.width) + static_cast<size_t>(x)] =
                s / static_cast<float>(im.channels);
        }
    return g;
}

}  // namespace

float psnr(const Image& pred, const Image& gt, float max_val) {
    check_shapes(pred, gt, "psnr");
    if (max_val <= 0.0f) throw ConfigError("psnr: max_val must be positive");
    size_t n = pred.data.size();
    if (n == 0) throw ShapeError("psnr: empty image");

    // Deterministic parallel reduction: fixed blocks, partials summed in
    // block order.
    constexpr size_t kBlock = 1 << 14;
    size_t n_blocks = (n + kBlock - 1) / kBlock;
    std::vector<double> partial(n_blocks, 0.0);
    par::parallel_for(static_cast<int64_t>(n_blocks), [&](int64_t b) {
        size_t lo = static_cast<size_t>(b) * kBlock, hi = std::min(lo + kBlock, n);
        double acc = 0.0;
        for (size_t i = lo; i < hi; ++i) {
            double d = static_cast<double>(pred.data[i]) - static_cast<double>(gt.data[i]);
            acc += d * d;
        }
        partial[static_cast<size_t>(b)] = acc;
    });
    double mse = 0.0;
    for (double p : partial) mse += p;
    mse /= static_cast<double>(n);

    if (mse <= 0.0) return 99.0f;
    double db = 10.0 * std::log10(static_cast<double>(max_val) * max_val / mse);
    return static_cast<float>(std::min(db, 99.0));
}

float ssim(const Image& pred, const Image& gt) {
    check_shapes(pred, gt, "ssim");
    if (pred.width < kWin || pred.height < kWin)
        throw ShapeError("ssim: image " + std::to_string(pred.width) + "x" +
                         std::to_string(pred.height) + " is smaller than the 11x11 window");

    std::vector<float> gx = to_gray(pred), gy = to_gray(gt);
    const auto& win = ssim_window();
    int w = pred.width, h = pred.height;
    int out_w = w - kWin + 1, out_h = h - kWin + 1;

    std::vector<double> row_sum(static_cast<size_t>(out_h), 0.0);
    par::parallel_for(out_h, [&](int64_t y0) {
        double acc = 0.0;
        for (int x0 = 0; x0 < out_w; ++x0) {
            double mx = 0.0, my = 0.0, xx = 0.0, yy = 0.0, xy = 0.0;
            for (int j = 0; j < kWin; ++j)
                for (int i = 0; i < kWin; ++i) {
                    double wt = win[static_cast<size_t>(j * kWin + i)];
                    double a = gx[static_cast<size_t>((y0 + j) * w + (x0 + i))];
                    double b = gy[static_cast<size_t>((y0 + j) * w + (x0 + i))];
                    mx += wt * a;
                    my += wt * b;
                    xx += wt * a * a;
                    yy += wt * b * b;
                    xy += wt * a * b;
                }
            double vx = xx - mx * mx, vy = yy - my * my, cov = xy - mx * my;
            acc += (2.0 * mx * my + kC1) * (2.0 * cov + kC2) /
                   ((mx * mx + my * my + kC1) * (vx + vy + kC2));
        }
        row_sum[static_cast<size_t>(y0)] = acc;
    });
    double total = 0.0;
    for (double r : row_sum) total += r;
    return static_cast<float>(total / (static_cast<double>(out_w) * static_cast<double>(out_h)));
}

std::string EvalReport::to_csv() const {
    std::ostringstream out;
    out << "view,psnr,ssim\n";
    char buf[64];
    for (const EvalRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.4f,%.6f", r.psnr, r.ssim);
        out << r.name << "," << buf << "\n";
    }
    std::snprintf(buf, sizeof(buf), "%.4f,%.6f", mean_psnr, mean_ssim);
    out << "mean," << buf << "\n";
    return out.str();
}

EvalReport evaluate(const ModelState& state, const DatasetManifest& manifest,
                    const SamplerConfig& sampler, uint64_t seed) {
    auto t0 = std::chrono::steady_clock::now();
    auto tests = load_views(manifest, false);
    if (tests.empty()) throw ConfigError("evaluate: manifest has no test views");

    // Test frames never received embedding rows of their own during
    // training; every test render borrows the reference image's row.
    auto trains = manifest.train_frames();
    int ref_row = -1;
    for (size_t i = 0; i < trains.size(); ++i)
        if (trains[i]->reference) ref_row = static_cast<int>(i);
    if (ref_row < 0) throw ConfigError("evaluate: manifest has no reference frame");

    std::vector<float> lw(static_cast<size_t>(state.field.grid.n_levels()), 1.0f);
    ModelView mv = state.view(lw);

    EvalReport rep;
    double sum_psnr = 0.0, sum_ssim = 0.0;
    for (size_t i = 0; i < tests.size(); ++i) {
        const LoadedView& tv = tests[i];
        uint64_t view_seed = fnv1a64_mix(fnv1a64_mix(fnv1a64("eval"), seed),
                                         static_cast<uint64_t>(tv.frame->index));
        Image render = render_image(mv, ref_row, tv.frame->pose, sampler, view_seed);
        EvalRow row;
        row.name = "test_" + std::to_string(tv.frame->index);
        row.psnr = psnr(render, tv.rgb);
        row.ssim = ssim(render, tv.rgb);
        sum_psnr += row.psnr;
        sum_ssim += row.ssim;
        rep.rows.push_back(std::move(row));
    }
    rep.mean_psnr = sum_psnr / static_cast<double>(rep.rows.size());
    rep.mean_ssim = sum_ssim / static_cast<double>(rep.rows.size());

    uint64_t fp = fnv1a64(embed_mode_name(state.mode));
    fp = fnv1a64_mix(fp, static_cast<uint64_t>(state.step));
    fp = fnv1a64_mix(fp, static_cast<uint64_t>(state.n_images));
    fp = fnv1a64_mix(fp, seed);
    fp = fnv1a64_mix(fp, manifest.seed);
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(fp));
    rep.fingerprint = hex;

    rep.runtime_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

void write_report(const EvalReport& report, const std::string& csv_path) {
    std::ofstream out(csv_path, std::ios::binary);
    if (!out) throw IoError("cannot write " + csv_path);
    out << report.to_csv();
    if (!out) throw IoError("write failed: " + csv_path);
}

}  // namespace specrf
