#include <cmath>
#include <vector>

#include "doctest.h"
#include "fd_check.hpp"
#include "specrf/field.hpp"
#include "specrf/optim.hpp"
#include "specrf/shading.hpp"

using namespace specrf;

namespace {

constexpr double kPi = 3.14159265358979323846;

Vec3 random_unit(Pcg32& rng) {
    for (;;) {
        Vec3 v{2.0f * rng.next_float() - 1.0f, 2.0f * rng.next_float() - 1.0f,
               2.0f * rng.next_float() - 1.0f};
        float n = norm(v);
        if (n > 0.1f && n < 1.0f) return v * (1.0f / n);
    }
}

float angle_deg(const Vec3& a, const Vec3& b) {
    float d = std::clamp(dot(a, b), -1.0f, 1.0f);
    return static_cast<float>(std::acos(d) * 180.0 / kPi);
}

// Single-level grid filled with an affine function of position; trilinear
// interpolation reproduces it exactly, which gives a closed-form oracle for
// gathered features anywhere in the domain.
struct LinearFieldRig {
    ParamStore store;
    GridMeta grid;
    std::vector<float> coef;  // per channel: {bias, cx, cy, cz}

    explicit LinearFieldRig(int res = 16)
        : coef{0.25f, 0.5f,  -0.3f, 0.8f,
               -0.7f, 0.1f,  0.9f,  -0.2f} {
        grid = make_grid_meta(store, {res}, 2, 64, 16);
        const auto& lv = grid.levels[0];
        float step = 2.0f * grid.half_extent / (lv.res - 1);
        for (int iz = 0; iz < lv.res; ++iz)
            for (int iy = 0; iy < lv.res; ++iy)
                for (int ix = 0; ix < lv.res; ++ix) {
                    float x = -grid.half_extent + ix * step;
                    float y = -grid.half_extent + iy * step;
                    float z = -grid.half_extent + iz * step;
                    size_t v = grid_vertex_index(lv, ix, iy, iz);
                    for (int c = 0; c < 2; ++c)
                        store.values[lv.offset + v * 2 + c] = at(c, {x, y, z});
                }
    }

    float at(int c, const Vec3& p) const {
        const float* k = coef.data() + 4 * c;
        return k[0] + k[1] * p.x + k[2] * p.y + k[3] * p.z;
    }
};

std::vector<double> to_double(const std::vector<float>& v) {
    return std::vector<double>(v.begin(), v.end());
}

}  // namespace

TEST_CASE("normal tie penalty values and masking") {
    Vec3 up{0.0f, 0.0f, 1.0f};
    CHECK(tie_penalty(up, up) == doctest::Approx(0.0f).epsilon(1e-7));
    CHECK(tie_penalty(up, {0.0f, 0.0f, -1.0f}) == doctest::Approx(2.0f).epsilon(1e-7));
    float s60 = std::sin(static_cast<float>(kPi) / 3.0f);
    Vec3 tilted{s60, 0.0f, 0.5f};
    CHECK(tie_penalty(up, tilted) == doctest::Approx(0.5f).epsilon(1e-6));

    // tape node agrees and ignores the target's gradient path
    Tape<float> tape;
    int a = tape.normalize3(tape.constant3(0.1f, 0.0f, 0.9f));
    int b = tape.normalize3(tape.constant3(0.0f, 0.2f, 0.8f));
    int t = tie_penalty_node(tape, a, b);
    auto av = tape.val(a);
    auto bv = tape.val(b);
    float expect = 1.0f - (av[0] * bv[0] + av[1] * bv[1] + av[2] * bv[2]);
    CHECK(tape.val1(t) == doctest::Approx(expect).epsilon(1e-6));

    // degenerate density normal masks the sample's penalty entirely
    Tape<float> tape2;
    int good = tape2.normalize3(tape2.constant3(0.0f, 1.0f, 0.0f));
    int bad = tape2.normalize3(tape2.constant3(1e-12f, 0.0f, 0.0f));
    CHECK(tape2.normalize_flagged(bad));
    int masked = tie_penalty_node(tape2, good, bad);
    CHECK(tape2.val1(masked) == 0.0f);
}

TEST_CASE("reflection examples and involution") {
    float inv_r2 = 1.0f / std::sqrt(2.0f);
    Vec3 up{0.0f, 0.0f, 1.0f};

    Vec3 r1 = reflect_dir({0.0f, 0.0f, -1.0f}, up);
    CHECK(norm(r1 - Vec3{0.0f, 0.0f, 1.0f}) < 1e-6f);

    Vec3 r2 = reflect_dir({inv_r2, 0.0f, -inv_r2}, up);
    CHECK(norm(r2 - Vec3{inv_r2, 0.0f, inv_r2}) < 1e-6f);

    Pcg32 rng(2024u, 7u);
    for (int i = 0; i < 200; ++i) {
        Vec3 n = random_unit(rng);
        Vec3 d = random_unit(rng);
        Vec3 r = reflect_dir(d, n);
        CHECK(std::fabs(norm(r) - 1.0f) < 1e-5f);
        CHECK(norm(reflect_dir(r, n) - d) < 1e-6f);

        // grazing identity: a direction in the normal's plane is unchanged
        Vec3 g = cross(n, d);
        if (norm(g) > 1e-3f) {
            g = normalized(g);
            CHECK(norm(reflect_dir(g, n) - g) < 1e-6f);
        }
    }
}

TEST_CASE("unscented direction sets") {
    Pcg32 rng(77u, 3u);
    Vec3 d = random_unit(rng);

    auto single = unscented_directions(d, 0.2f, 1);
    REQUIRE(single.size() == 1);
    CHECK(norm(single[0] - d) == 0.0f);

    auto collapsed = unscented_directions(d, 0.0f, 5);
    REQUIRE(collapsed.size() == 5);
    for (const Vec3& v : collapsed) CHECK(norm(v - d) == 0.0f);

    for (int k : {5, 9, 25}) {
        for (int trial = 0; trial < 20; ++trial) {
            Vec3 c = random_unit(rng);
            auto dirs = unscented_directions(c, 0.1f, k);
            REQUIRE(static_cast<int>(dirs.size()) == k);
            CHECK(norm(dirs[0] - c) == 0.0f);
            Vec3 mean{0.0f, 0.0f, 0.0f};
            for (const Vec3& v : dirs) {
                CHECK(std::fabs(norm(v) - 1.0f) < 1e-6f);
                mean = mean + v;
            }
            mean = mean * (1.0f / static_cast<float>(k));
            CHECK(norm(normalized(mean) - c) < 1e-6f);
            // offsets actually leave the center
            CHECK(angle_deg(dirs[1], c) > 1.0f);
        }
    }

    CHECK_THROWS_AS(unscented_directions(d, 0.1f, 2), ConfigError);
    CHECK_THROWS_AS(unscented_directions(d, 0.1f, 4), ConfigError);
    CHECK_THROWS_AS(unscented_directions(d, 0.1f, 0), ConfigError);
}

TEST_CASE("environment feature matches hand-computed samples") {
    LinearFieldRig rig;
    std::vector<float> lw{1.0f};

    PrefilterParams pf;
    pf.rdot = 0.01f;  // sigma = 0.02
    auto atten = erf_attenuation(rig.grid, pf);
    float erf_expect =
        std::erf(1.0f / (std::sqrt(8.0f) * 16.0f * pf.sigma()));
    CHECK(atten[0] == doctest::Approx(erf_expect).epsilon(1e-6));

    // K=1 straight up: the distant point is contract(0,0,2) = (0,0,1.5)
    Vec3 d{0.0f, 0.0f, 1.0f};
    {
        Tape<float> tape;
        tape.params = rig.store.values.data();
        tape.grid = &rig.grid;
        tape.level_w = lw.data();
        std::vector<Vec3> dirs{d};
        int f = env_feature_node(tape, dirs, atten);
        auto fv = tape.val(f);
        REQUIRE(fv.size() == 2);
        Vec3 p{0.0f, 0.0f, 1.5f};
        CHECK(fv[0] == doctest::Approx(rig.at(0, p) * erf_expect).epsilon(1e-5));
        CHECK(fv[1] == doctest::Approx(rig.at(1, p) * erf_expect).epsilon(1e-5));
    }

    // K=5 with sigma=0: plain average of the affine field at the contracted
    // distant points (trilinear reproduces affine exactly)
    {
        Pcg32 rng(11u, 5u);
        Vec3 c = random_unit(rng);
        auto dirs = unscented_directions(c, 0.15f, 5);
        PrefilterParams sharp;  // rdot = 0 => sigma = 0
        auto ones = erf_attenuation(rig.grid, sharp);
        Tape<float> tape;
        tape.params = rig.store.values.data();
        tape.grid = &rig.grid;
        tape.level_w = lw.data();
        int f = env_feature_node(tape, dirs, ones);
        auto fv = tape.val(f);
        for (int ch = 0; ch < 2; ++ch) {
            float expect = 0.0f;
            for (const Vec3& dj : dirs) {
                Vec3 far = distant_point(dj);
                float r = norm(far);
                Vec3 contracted = far * ((2.0f - 1.0f / r) / r);
                expect += rig.at(ch, contracted);
            }
            expect /= static_cast<float>(dirs.size());
            CHECK(fv[ch] == doctest::Approx(expect).epsilon(1e-5));
        }
    }
}

TEST_CASE("environment feature attenuation limits and monotonicity") {
    LinearFieldRig rig;
    std::vector<float> lw{1.0f};

    PrefilterParams zero;  // sigma = 0
    auto ones = erf_attenuation(rig.grid, zero);
    for (float a : ones) CHECK(a == 1.0f);

    PrefilterParams huge;
    huge.rdot = 1e9f;
    auto gone = erf_attenuation(rig.grid, huge);

    Tape<float> tape;
    tape.params = rig.store.values.data();
    tape.grid = &rig.grid;
    tape.level_w = lw.data();
    std::vector<Vec3> dirs{Vec3{0.0f, 0.0f, 1.0f}};
    int f = env_feature_node(tape, dirs, gone);
    for (float v : tape.val(f)) CHECK(std::fabs(v) < 1e-6f);

    // strictly decreasing per channel as sigma grows
    std::vector<float> sigmas{1e-3f, 1e-2f, 1e-1f, 1.0f, 10.0f};
    std::vector<std::vector<float>> rows;
    for (float s : sigmas) {
        PrefilterParams pf;
        pf.rdot = 0.5f * s;  // sigma() = s
        rows.push_back(erf_attenuation(rig.grid, pf));
    }
    for (size_t r = 1; r < rows.size(); ++r)
        for (size_t c = 0; c < rows[r].size(); ++c) CHECK(rows[r][c] < rows[r - 1][c]);
}

TEST_CASE("shaded color is deterministic, bounded, and differentiable in the env feature") {
    ParamStore store;
    Pcg32 rng = substream(42u, "init");
    ShadingConfig cfg;
    cfg.embed_dim = 8;
    cfg.perturb_hidden = 24;
    cfg.color_hidden = 24;
    int feat_dim = 6;
    ShadingModel model = build_shading_model(store, rng, 3, feat_dim, cfg);

    Pcg32 draw(501u, 9u);
    auto random_vec = [&](int n, float s) {
        std::vector<float> v(static_cast<size_t>(n));
        for (float& x : v) x = s * (2.0f * draw.next_float() - 1.0f);
        return v;
    };

    // determinism: identical tapes produce bit-identical colors
    std::vector<float> feats = random_vec(feat_dim, 1.0f);
    std::vector<float> envf = random_vec(feat_dim, 1.0f);
    Vec3 n = random_unit(draw);
    auto run = [&]() {
        Tape<float> tape;
        tape.params = store.values.data();
        int fx = tape.constant(std::span<const float>(feats));
        int nn = tape.constant3(n.x, n.y, n.z);
        int fe = tape.constant(std::span<const float>(envf));
        int c = shaded_color_node(tape, model, fx, nn, fe, 1, EmbedMode::Shading);
        auto cv = tape.val(c);
        return std::vector<float>(cv.begin(), cv.end());
    };
    auto c1 = run();
    auto c2 = run();
    REQUIRE(c1.size() == 3);
    CHECK(c1 == c2);

    // range: sigmoid keeps every component strictly inside (0,1)
    for (int trial = 0; trial < 50; ++trial) {
        feats = random_vec(feat_dim, 2.0f);
        envf = random_vec(feat_dim, 2.0f);
        n = random_unit(draw);
        for (float v : run()) {
            CHECK(v > 0.0f);
            CHECK(v < 1.0f);
        }
    }

    // gradient w.r.t. the env feature vs central differences, in double
    std::vector<double> dparams = to_double(store.values);
    std::vector<double> dgrad(dparams.size(), 0.0);
    std::vector<double> dfeats, denvf;
    double seen_kink = 0.0;
    auto forward = [&](const std::vector<double>& env_in, Tape<double>* keep) -> double {
        Tape<double> local;
        Tape<double>& tape = keep ? *keep : local;
        tape.params = dparams.data();
        tape.pgrad = keep ? dgrad.data() : nullptr;
        int fx = tape.constant(std::span<const double>(dfeats));
        int nn = tape.constant3(n.x, n.y, n.z);
        int fe = tape.constant(std::span<const double>(env_in));
        int c = shaded_color_node(tape, model, fx, nn, fe, 0, EmbedMode::Appearance);
        // weighted sum makes all three channels matter
        int w = tape.constant3(0.9, -0.4, 0.6);
        int loss = tape.dot(c, w);
        if (keep) {
            tape.backward(loss);
            return tape.val1(loss);
        }
        return tape.val1(loss);
    };

    Pcg32 hygiene(901u, 2u);
    for (int attempt = 0;; ++attempt) {
        REQUIRE(attempt < 50);
        dfeats.assign(static_cast<size_t>(feat_dim), 0.0);
        denvf.assign(static_cast<size_t>(feat_dim), 0.0);
        for (double& v : dfeats) v = 2.0 * hygiene.next_float() - 1.0;
        for (double& v : denvf) v = 2.0 * hygiene.next_float() - 1.0;
        n = random_unit(hygiene);
        Tape<double> probe;
        probe.params = dparams.data();
        int fx = probe.constant(std::span<const double>(dfeats));
        int nn = probe.constant3(n.x, n.y, n.z);
        int fe = probe.constant(std::span<const double>(denvf));
        shaded_color_node(probe, model, fx, nn, fe, 0, EmbedMode::Appearance);
        seen_kink = probe.min_relu_abs;
        if (seen_kink > 1e-3) break;
    }

    Tape<double> tape;
    tape.params = dparams.data();
    tape.pgrad = dgrad.data();
    int fx = tape.constant(std::span<const double>(dfeats));
    int nn = tape.constant3(n.x, n.y, n.z);
    int fe = tape.constant(std::span<const double>(denvf));
    int c = shaded_color_node(tape, model, fx, nn, fe, 0, EmbedMode::Appearance);
    int w = tape.constant3(0.9, -0.4, 0.6);
    tape.backward(tape.dot(c, w));
    auto analytic = tape.adj(fe);

    double worst = 0.0;
    for (int k = 0; k < feat_dim; ++k) {
        double fd = fdcheck::central_diff(denvf, static_cast<size_t>(k),
                                          [&](const std::vector<double>& e) {
                                              return forward(e, nullptr);
                                          },
                                          1e-4);
        worst = std::max(worst, fdcheck::rel_err(analytic[k], fd));
    }
    CHECK(worst < 1e-3);
}

TEST_CASE("perturbed normal is unit and differentiable in the embedding") {
    ParamStore store;
    Pcg32 rng = substream(43u, "init");
    ShadingConfig cfg;
    cfg.embed_dim = 8;
    cfg.perturb_hidden = 24;
    int feat_dim = 6;
    ShadingModel model = build_shading_model(store, rng, 2, feat_dim, cfg);

    // give the probed row a non-trivial value
    Pcg32 draw(700u, 4u);
    for (int k = 0; k < cfg.embed_dim; ++k)
        store.values[model.embed_row(1) + k] = 0.5f * (2.0f * draw.next_float() - 1.0f);

    std::vector<double> dparams = to_double(store.values);
    std::vector<double> dgrad(dparams.size(), 0.0);
    std::vector<double> dfeats(static_cast<size_t>(feat_dim));

    auto forward = [&](bool with_grad, double* min_relu, double* min_norm) -> double {
        Tape<double> tape;
        tape.params = dparams.data();
        tape.pgrad = with_grad ? dgrad.data() : nullptr;
        int fx = tape.constant(std::span<const double>(dfeats));
        int nrm = perturbed_normal_node(tape, model, fx, 1, EmbedMode::Shading);
        auto nv = tape.val(nrm);
        double len = std::sqrt(nv[0] * nv[0] + nv[1] * nv[1] + nv[2] * nv[2]);
        CHECK(std::fabs(len - 1.0) < 1e-9);
        int w = tape.constant3(0.3, 0.8, -0.5);
        int loss = tape.dot(nrm, w);
        if (with_grad) tape.backward(loss);
        if (min_relu) *min_relu = tape.min_relu_abs;
        if (min_norm) *min_norm = tape.min_norm;
        return tape.val1(loss);
    };

    // kink and degenerate-normalization hygiene before differencing
    Pcg32 hygiene(311u, 8u);
    for (int attempt = 0;; ++attempt) {
        REQUIRE(attempt < 50);
        for (double& v : dfeats) v = 2.0 * hygiene.next_float() - 1.0;
        double mr = 0.0, mn = 0.0;
        forward(false, &mr, &mn);
        if (mr > 1e-3 && mn > 1e-2) break;
    }

    forward(true, nullptr, nullptr);
    size_t row = model.embed_row(1);
    double worst = 0.0;
    for (int k = 0; k < cfg.embed_dim; ++k) {
        double fd = fdcheck::central_diff(dparams, row + static_cast<size_t>(k),
                                          [&](const std::vector<double>&) {
                                              return forward(false, nullptr, nullptr);
                                          },
                                          1e-4);
        worst = std::max(worst, fdcheck::rel_err(dgrad[row + k], fd));
    }
    CHECK(worst < 1e-3);
}

TEST_CASE("per-image isolation and the zero-embedding special case") {
    ParamStore store;
    Pcg32 rng = substream(44u, "init");
    ShadingConfig cfg;
    cfg.embed_dim = 8;
    cfg.perturb_hidden = 16;
    cfg.color_hidden = 16;
    int feat_dim = 4;
    int n_images = 4;
    ShadingModel model = build_shading_model(store, rng, n_images, feat_dim, cfg);

    std::vector<float> feats{0.3f, -0.2f, 0.7f, 0.1f};
    std::vector<float> envf{-0.4f, 0.6f, 0.2f, -0.1f};

    auto color_for = [&](int image, EmbedMode mode, std::vector<float>* grad) {
        Tape<float> tape;
        tape.params = store.values.data();
        if (grad) tape.pgrad = grad->data();
        int fx = tape.constant(std::span<const float>(feats));
        int fe = tape.constant(std::span<const float>(envf));
        int nrm = perturbed_normal_node(tape, model, fx, image, mode);
        int c = shaded_color_node(tape, model, fx, nrm, fe, image, mode);
        int loss = tape.sum(c);
        if (grad) tape.backward(loss);
        auto cv = tape.val(c);
        return std::vector<float>(cv.begin(), cv.end());
    };

    // zero rows: both embedding modes coincide exactly with the shared model
    auto base = color_for(2, EmbedMode::None, nullptr);
    CHECK(color_for(2, EmbedMode::Shading, nullptr) == base);
    CHECK(color_for(2, EmbedMode::Appearance, nullptr) == base);

    // randomize the table; gradients must touch exactly the rendered row
    Pcg32 draw(88u, 1u);
    for (int i = 0; i < n_images; ++i)
        for (int k = 0; k < cfg.embed_dim; ++k)
            store.values[model.embed_row(i) + k] = 0.4f * (2.0f * draw.next_float() - 1.0f);

    for (EmbedMode mode : {EmbedMode::Shading, EmbedMode::Appearance}) {
        std::vector<float> grad(store.size(), 0.0f);
        color_for(2, mode, &grad);
        for (int i = 0; i < n_images; ++i) {
            float mass = 0.0f;
            for (int k = 0; k < cfg.embed_dim; ++k)
                mass += std::fabs(grad[model.embed_row(i) + k]);
            if (i == 2)
                CHECK(mass > 0.0f);
            else
                CHECK(mass == 0.0f);
        }
    }

    {
        std::vector<float> grad(store.size(), 0.0f);
        color_for(2, EmbedMode::None, &grad);
        for (int i = 0; i < n_images; ++i)
            for (int k = 0; k < cfg.embed_dim; ++k)
                CHECK(grad[model.embed_row(i) + k] == 0.0f);
    }

    // with distinct rows, distinct images genuinely differ
    auto ca = color_for(0, EmbedMode::Shading, nullptr);
    auto cb = color_for(3, EmbedMode::Shading, nullptr);
    CHECK(ca != cb);
}

TEST_CASE("strong tie weight pulls perturbed normals onto density normals") {
    // Toy field with a randomized density head so gradients (and therefore
    // density normals) are well-defined, then optimize only the tie penalty.
    ParamStore store;
    Pcg32 rng = substream(45u, "init");
    FieldConfig fc;
    fc.resolutions = {16, 32};
    fc.channels = 2;
    fc.density_hidden = 16;
    FieldModel field = build_field_model(store, rng, fc);
    net_init(store, field.density, rng);  // undo the translucent-start head
    for (const auto& lv : field.grid.levels) {
        float* g = store.values.data() + lv.offset;
        size_t n = lv.vertex_count * static_cast<size_t>(field.grid.channels);
        for (size_t k = 0; k < n; ++k) g[k] = 0.5f * (2.0f * rng.next_float() - 1.0f);
    }
    std::vector<float> lw(static_cast<size_t>(field.grid.n_levels()), 1.0f);

    ShadingConfig sc;
    sc.embed_dim = 8;
    sc.perturb_hidden = 32;
    ShadingModel model = build_shading_model(store, rng, 2, field.grid.feature_dim(), sc);

    // fixed probe set: features and target normals are frozen up front
    struct Probe {
        std::vector<float> feats;
        Vec3 target;
        int image;
    };
    std::vector<Probe> probes;
    Pcg32 draw(909u, 6u);
    while (probes.size() < 32) {
        Vec3 x{2.4f * draw.next_float() - 1.2f, 2.4f * draw.next_float() - 1.2f,
               2.4f * draw.next_float() - 1.2f};
        auto dn = density_and_normal(field, store, x, lw);
        if (dn.flagged) continue;
        Tape<float> tape;
        tape.params = store.values.data();
        tape.grid = &field.grid;
        tape.level_w = lw.data();
        int f = tape.gather(tape.constant3(x.x, x.y, x.z));
        auto fv = tape.val(f);
        probes.push_back({std::vector<float>(fv.begin(), fv.end()), dn.normal,
                          static_cast<int>(probes.size() % 2)});
    }

    auto mean_gap_deg = [&]() {
        float acc = 0.0f;
        for (const Probe& p : probes) {
            Tape<float> tape;
            tape.params = store.values.data();
            int fx = tape.constant(std::span<const float>(p.feats));
            int nrm = perturbed_normal_node(tape, model, fx, p.image, EmbedMode::Shading);
            auto nv = tape.val(nrm);
            acc += angle_deg({nv[0], nv[1], nv[2]}, p.target);
        }
        return acc / static_cast<float>(probes.size());
    };

    float before = mean_gap_deg();

    AdamState adam(store.size());
    std::vector<float> grad(store.size(), 0.0f);
    for (int step = 0; step < 1500; ++step) {
        std::fill(grad.begin(), grad.end(), 0.0f);
        Tape<float> tape;
        tape.params = store.values.data();
        tape.pgrad = grad.data();
        std::vector<int> ties;
        for (const Probe& p : probes) {
            int fx = tape.constant(std::span<const float>(p.feats));
            int nrm = perturbed_normal_node(tape, model, fx, p.image, EmbedMode::Shading);
            int tgt = tape.constant3(p.target.x, p.target.y, p.target.z);
            int one = tape.constant1(1.0f);
            ties.push_back(tape.sub(one, tape.dot(nrm, tgt)));
        }
        int loss = tape.scale(tape.sum(tape.pack(ties)), 1.0f / static_cast<float>(ties.size()));
        tape.backward(loss);
        adam_step(store.values, grad, adam, 3e-3f);
    }

    float after = mean_gap_deg();
    CHECK(before > 10.0f);  // start genuinely misaligned
    CHECK(after < 2.0f);
}
