#include <cmath>
#include <cstring>

#include "doctest.h"
#include "specrf/dataset.hpp"
#include "specrf/par.hpp"
#include "specrf/scene.hpp"

using namespace specrf;

namespace {

EnvMap single_lobe_env(float sigma) {
    EnvMap env;
    env.ambient = {0.0f, 0.0f, 0.0f};
    env.gradient = {0.0f, 0.0f, 0.0f};
    env.lobes = {EnvMap::Lobe{{0.0f, 0.0f, 1.0f}, sigma, {2.0f, 1.5f, 1.0f}}};
    return env;
}

Vec3 random_unit(Pcg32& rng) {
    Vec3 v;
    do {
        v = {static_cast<float>(rng.next_normal()), static_cast<float>(rng.next_normal()),
             static_cast<float>(rng.next_normal())};
    } while (norm(v) < 1e-3f);
    return normalized(v);
}

}  // namespace

TEST_CASE("environment lobe peaks at its direction") {
    EnvMap env = single_lobe_env(0.3f);
    Vec3 peak = envmap_eval(env, {0.0f, 0.0f, 1.0f});
    CHECK(peak.x == doctest::Approx(2.0f).epsilon(1e-6));
    CHECK(peak.y == doctest::Approx(1.5f).epsilon(1e-6));
    CHECK(peak.z == doctest::Approx(1.0f).epsilon(1e-6));
}

TEST_CASE("narrow lobe contributes almost nothing at 90 degrees") {
    // exp((cos90 - 1)/sigma^2) = exp(-1/sigma^2); for sigma=0.4 that is
    // exp(-6.25) ~ 0.19%, well under the 1% requirement.
    float sigma = 0.4f;
    EnvMap env = single_lobe_env(sigma);
    Vec3 v = envmap_eval(env, {1.0f, 0.0f, 0.0f});
    float expected = std::exp(-1.0f / (sigma * sigma));
    CHECK(v.x == doctest::Approx(2.0f * expected).epsilon(1e-5));
    CHECK(v.x <= 0.01f * 2.0f);
    CHECK(v.y <= 0.01f * 1.5f);
    CHECK(v.z <= 0.01f * 1.0f);
}

TEST_CASE("environment azimuth is 2pi periodic") {
    DatasetConfig cfg;
    EnvMap rotated = cfg.env;
    rotated.azimuth = 2.0f * static_cast<float>(M_PI);
    Pcg32 rng = substream(7, "dataset");
    for (int i = 0; i < 200; ++i) {
        Vec3 d = random_unit(rng);
        Vec3 a = envmap_eval(cfg.env, d);
        Vec3 b = envmap_eval(rotated, d);
        CHECK(norm(a - b) < 1e-6f * (1.0f + norm(a)));
    }
}

TEST_CASE("environment radiance is non-negative and strict mode rejects bad dirs") {
    DatasetConfig cfg;
    Pcg32 rng = substream(8, "dataset");
    for (int i = 0; i < 100; ++i) {
        Vec3 v = envmap_eval(cfg.env, random_unit(rng));
        CHECK(v.x >= 0.0f);
        CHECK(v.y >= 0.0f);
        CHECK(v.z >= 0.0f);
    }
    // default mode repairs a non-unit direction, strict mode refuses it
    Vec3 bad{0.0f, 0.0f, 2.0f};
    Vec3 repaired = envmap_eval(cfg.env, bad);
    Vec3 unit = envmap_eval(cfg.env, {0.0f, 0.0f, 1.0f});
    CHECK(norm(repaired - unit) < 1e-6f);
    set_strict_mode(true);
    CHECK_THROWS_AS(envmap_eval(cfg.env, bad), NumericError);
    set_strict_mode(false);
}

TEST_CASE("zero-magnitude warp is exactly the identity") {
    WarpSpec w = make_warp(123, 0.0f, 0.0f);
    CHECK(w.is_identity());
    Pcg32 rng = substream(9, "dataset");
    for (int i = 0; i < 50; ++i) {
        Vec3 d = random_unit(rng);
        Vec3 out = warp_direction(w, d);
        CHECK(out.x == d.x);
        CHECK(out.y == d.y);
        CHECK(out.z == d.z);
    }
}

TEST_CASE("pure rotation warp rotates perpendicular directions by its angle") {
    WarpSpec w;
    w.axis = {0.0f, 0.0f, 1.0f};
    w.angle = 0.3f;
    w.eps_warp = 0.0f;
    Vec3 d{1.0f, 0.0f, 0.0f};
    Vec3 out = warp_direction(w, d);
    float ang = std::acos(std::clamp(dot(d, out), -1.0f, 1.0f));
    CHECK(ang == doctest::Approx(0.3f).epsilon(1e-5));
    CHECK(nearly_unit(out));
}

TEST_CASE("warp deviation stays within the configured bound over 1e5 samples") {
    const float eps_rot = 0.55f, eps_warp = 0.45f;
    float bound = eps_rot + eps_warp;
    float worst = 0.0f;
    Pcg32 rng = substream(10, "dataset");
    for (int s = 0; s < 10; ++s) {
        WarpSpec w = make_warp(1000 + s, eps_rot, eps_warp);
        for (int i = 0; i < 10000; ++i) {
            Vec3 d = random_unit(rng);
            Vec3 out = warp_direction(w, d);
            CHECK(nearly_unit(out));
            float ang = std::acos(std::clamp(dot(d, out), -1.0f, 1.0f));
            worst = std::max(worst, ang);
        }
    }
    CHECK(worst <= bound + 1e-4f);
    CHECK(worst > 0.1f); // the warp actually does something
}

TEST_CASE("rays that miss return the white background") {
    DatasetConfig cfg;
    WarpSpec identity;
    TraceResult r = trace_ray(cfg.scene, cfg.env, identity,
                              {0.0f, 0.0f, 5.0f}, normalized(Vec3{1.0f, 1.0f, 0.5f}));
    CHECK_FALSE(r.hit);
    CHECK(r.rgb.x == 1.0f);
    CHECK(r.rgb.y == 1.0f);
    CHECK(r.rgb.z == 1.0f);
}

TEST_CASE("head-on mirror hit looks up the reversed ray direction") {
    AnalyticScene scene;
    Sphere s;
    s.center = {0.0f, 0.0f, 0.0f};
    s.radius = 1.0f;
    s.material = Material::Mirror;
    scene.spheres = {s};
    EnvMap env = single_lobe_env(0.5f);
    env.ambient = {0.1f, 0.1f, 0.1f};
    WarpSpec identity;

    TraceResult r = trace_ray(scene, env, identity, {0.0f, 0.0f, 3.0f}, {0.0f, 0.0f, -1.0f});
    REQUIRE(r.hit);
    CHECK(r.t == doctest::Approx(2.0f).epsilon(1e-5));
    Vec3 expect = envmap_eval(env, {0.0f, 0.0f, 1.0f});
    expect = {std::min(expect.x, 1.0f), std::min(expect.y, 1.0f), std::min(expect.z, 1.0f)};
    CHECK(norm(r.rgb - expect) < 1e-6f);
}

TEST_CASE("off-axis mirror hit equals the hand-computed reflection lookup") {
    AnalyticScene scene;
    Sphere s;
    s.center = {0.0f, 0.0f, 0.0f};
    s.radius = 1.0f;
    s.material = Material::Mirror;
    scene.spheres = {s};
    DatasetConfig cfg;
    EnvMap env = cfg.env;
    WarpSpec identity;

    // Vertical ray at x=0.3: hits at z=sqrt(1-0.09), normal is the hit point,
    // reflected direction follows from d - 2(d.n)n.
    double x = 0.3, z = std::sqrt(1.0 - x * x);
    Vec3 dir{0.0f, 0.0f, -1.0f};
    TraceResult r = trace_ray(scene, env, identity, {static_cast<float>(x), 0.0f, 3.0f}, dir);
    REQUIRE(r.hit);
    CHECK(r.t == doctest::Approx(3.0 - z).epsilon(1e-5));

    Vec3 n{static_cast<float>(x), 0.0f, static_cast<float>(z)};
    double dn = -z;
    Vec3 refl{static_cast<float>(-2.0 * dn * x), 0.0f, static_cast<float>(-1.0 - 2.0 * dn * z)};
    CHECK(nearly_unit(refl, 1e-5f));
    Vec3 expect = envmap_eval(env, refl);
    expect = {std::min(expect.x, 1.0f), std::min(expect.y, 1.0f), std::min(expect.z, 1.0f)};
    CHECK(norm(r.rgb - expect) < 1e-5f);
    CHECK(norm(r.normal - n) < 1e-5f);
}

TEST_CASE("mirror render equals environment lookup along analytic reflections") {
    DatasetConfig cfg;
    WarpSpec identity;
    CameraPose pose;
    pose.position = {3.2f, -1.1f, 2.0f};
    pose.target = cfg.scene.spheres[0].center;
    pose.width = pose.height = 64;
    pose.focal_px = focal_from_fov(cfg.fov_deg, 64);

    Image rgb, mask;
    render_view(cfg.scene, cfg.env, identity, pose, rgb, mask);

    const Sphere& mirror = cfg.scene.spheres[0];
    int checked = 0;
    for (int y = 0; y < 64; ++y) {
        for (int x = 0; x < 64; ++x) {
            Ray ray = pose.pixel_ray(static_cast<float>(x), static_cast<float>(y));
            TraceResult tr = trace_ray(cfg.scene, cfg.env, identity, ray.origin, ray.dir);
            if (!tr.hit) continue;
            Vec3 p = ray.origin + ray.dir * tr.t;
            if (std::fabs(norm(p - mirror.center) - mirror.radius) > 1e-3f) continue;
            Vec3 refl = reflect_dir(ray.dir, tr.normal);
            Vec3 e = envmap_eval(cfg.env, normalized(refl));
            Vec3 expect{std::clamp(e.x, 0.0f, 1.0f), std::clamp(e.y, 0.0f, 1.0f),
                        std::clamp(e.z, 0.0f, 1.0f)};
            CHECK(std::fabs(rgb.at(x, y, 0) - expect.x) < 1e-5f);
            CHECK(std::fabs(rgb.at(x, y, 1) - expect.y) < 1e-5f);
            CHECK(std::fabs(rgb.at(x, y, 2) - expect.z) < 1e-5f);
            ++checked;
        }
    }
    CHECK(checked > 100); // the mirror must actually cover a good chunk of the view
}

TEST_CASE("distant tiny object leaves the mask mostly empty") {
    AnalyticScene scene;
    Sphere s;
    s.center = {0.0f, 0.0f, 0.0f};
    s.radius = 0.1f;
    s.material = Material::Mirror;
    scene.spheres = {s};
    EnvMap env;
    WarpSpec identity;
    CameraPose pose;
    pose.position = {0.0f, -5.0f, 0.0f};
    pose.target = {0.0f, 0.0f, 0.0f};
    pose.width = pose.height = 64;
    pose.focal_px = focal_from_fov(40.0f, 64);

    Image rgb, mask;
    render_view(scene, env, identity, pose, rgb, mask);
    int on = 0;
    for (float v : mask.data) on += v > 0.5f ? 1 : 0;
    CHECK(on > 0);
    CHECK(on < 64 * 64 / 20);
}

TEST_CASE("mask area matches the projected-disk prediction within 2 percent") {
    AnalyticScene scene;
    Sphere s;
    s.center = {0.0f, 0.0f, 0.0f};
    s.radius = 0.8f;
    s.material = Material::Mirror;
    scene.spheres = {s};
    EnvMap env;
    WarpSpec identity;

    const int res = 128;
    const float dist = 4.0f;
    CameraPose pose;
    pose.position = {0.0f, -dist, 0.0f};
    pose.target = {0.0f, 0.0f, 0.0f};
    pose.width = pose.height = res;
    pose.focal_px = focal_from_fov(40.0f, res);

    Image rgb, mask;
    render_view(scene, env, identity, pose, rgb, mask);
    int on = 0;
    for (float v : mask.data) on += v > 0.5f ? 1 : 0;

    // Silhouette of a centered sphere: a disk of angular radius asin(r/d),
    // i.e. pixel radius focal * tan(asin(r/d)).
    double half = std::asin(s.radius / dist);
    double r_px = pose.focal_px * std::tan(half);
    double predicted = M_PI * r_px * r_px;
    CHECK(std::fabs(on - predicted) / predicted < 0.02);
}

TEST_CASE("render_view is deterministic and mode-independent") {
    DatasetConfig cfg;
    WarpSpec warp = make_warp(42, cfg.eps_rot, cfg.eps_warp);
    CameraPose pose;
    pose.position = {2.5f, 2.0f, 1.8f};
    pose.target = {0.0f, 0.0f, 0.45f};
    pose.width = pose.height = 64;
    pose.focal_px = focal_from_fov(cfg.fov_deg, 64);

    Image a_rgb, a_mask, b_rgb, b_mask, s_rgb, s_mask;
    render_view(cfg.scene, cfg.env, warp, pose, a_rgb, a_mask);
    render_view(cfg.scene, cfg.env, warp, pose, b_rgb, b_mask);
    CHECK(std::memcmp(a_rgb.data.data(), b_rgb.data.data(), a_rgb.data.size() * sizeof(float)) == 0);
    CHECK(std::memcmp(a_mask.data.data(), b_mask.data.data(), a_mask.data.size() * sizeof(float)) == 0);

    auto prev = par::exec_mode();
    par::set_exec_mode(par::Exec::Serial);
    render_view(cfg.scene, cfg.env, warp, pose, s_rgb, s_mask);
    par::set_exec_mode(prev);
    CHECK(std::memcmp(a_rgb.data.data(), s_rgb.data.data(), a_rgb.data.size() * sizeof(float)) == 0);
}
