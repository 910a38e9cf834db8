#include "specrf/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "specrf/par.hpp"

namespace specrf {

namespace {

Vec3 rotate_about_axis(const Vec3& v, const Vec3& axis, float angle) {
    // Rodrigues rotation; axis must be unit.
    float c = std::cos(angle), s = std::sin(angle);
    return v * c + cross(axis, v) * s + axis * (dot(axis, v) * (1.0f - c));
}

Vec3 rotate_z(const Vec3& v, float angle) {
    float c = std::cos(angle), s = std::sin(angle);
    return {c * v.x - s * v.y, s * v.x + c * v.y, v.z};
}

}  // namespace

Vec3 envmap_eval(const EnvMap& env, const Vec3& dir) {
    Vec3 d = dir;
    if (!nearly_unit(d)) {
        if (strict_mode()) throw NumericError("environment lookup requires a unit direction");
        d = normalized(d);
    }
    // Rotating the map by `azimuth` is a lookup at the inversely rotated dir.
    if (env.azimuth != 0.0f) d = rotate_z(d, -env.azimuth);

    Vec3 out = env.ambient_at(d);
    for (const auto& lobe : env.lobes) {
        float a = (dot(d, lobe.dir) - 1.0f) / (lobe.sigma * lobe.sigma);
        float g = std::exp(a);
        out += lobe.rgb * g;
    }
    return out;
}

WarpSpec make_warp(uint64_t seed, float eps_rot, float eps_warp) {
    WarpSpec w;
    w.eps_warp = eps_warp;
    if (eps_rot == 0.0f && eps_warp == 0.0f) return w;

    Pcg32 rng = substream(seed, "warp");
    auto unit = [&]() {
        Vec3 v;
        do {
            v = {static_cast<float>(rng.next_normal()), static_cast<float>(rng.next_normal()),
                 static_cast<float>(rng.next_normal())};
        } while (norm(v) < 1e-4f);
        return normalized(v);
    };

    w.axis = unit();
    // Angle drawn in [eps_rot/2, eps_rot] so the rotation is present but the
    // configured bound still holds.
    w.angle = eps_rot == 0.0f ? 0.0f : eps_rot * (0.5f + 0.5f * rng.next_float());

    float total = 0.0f;
    for (int j = 0; j < 3; ++j) {
        WarpSpec::Wave wave;
        wave.c = unit();
        wave.u = unit();
        wave.freq = static_cast<float>(1 + static_cast<int>(rng.next_below(3)));
        wave.phase = 6.2831853f * rng.next_float();
        w.waves.push_back(wave);
        total += norm(wave.c);
    }
    for (auto& wave : w.waves) wave.c = wave.c / total; // sum of |c_j| == 1
    return w;
}

Vec3 warp_direction(const WarpSpec& w, const Vec3& dir) {
    if (w.is_identity()) return dir;
    Vec3 d = dir;
    if (w.angle != 0.0f) d = rotate_about_axis(d, w.axis, w.angle);
    if (w.eps_warp != 0.0f) {
        Vec3 t{0.0f, 0.0f, 0.0f};
        for (const auto& wave : w.waves) {
            Vec3 tang = wave.c - d * dot(wave.c, d); // tangential projection
            float ph = std::cos(wave.freq * dot(d, wave.u) + wave.phase);
            t += tang * ph;
        }
        d = normalized(d + t * w.eps_warp);
    }
    return d;
}

void AnalyticScene::validate() const {
    for (const auto& s : spheres) {
        if (s.radius <= 0.0f) throw ConfigError("sphere radius must be positive");
        if (s.reflectivity < 0.0f || s.reflectivity > 1.0f)
            throw ConfigError("reflectivity must lie in [0,1]");
    }
}

namespace {

struct Hit {
    float t = std::numeric_limits<float>::infinity();
    Vec3 normal;
    const Sphere* sphere = nullptr;
    bool plane = false;
};

bool intersect_sphere(const Sphere& s, const Vec3& o, const Vec3& d, float& t_out, Vec3& n_out) {
    Vec3 oc = o - s.center;
    float b = dot(oc, d);
    float c = dot(oc, oc) - s.radius * s.radius;
    float disc = b * b - c;
    if (disc < 0.0f) return false;
    float sq = std::sqrt(disc);
    float t = -b - sq;
    if (t < 1e-4f) t = -b + sq;
    if (t < 1e-4f) return false;
    t_out = t;
    n_out = normalized(o + d * t - s.center);
    return true;
}

Vec3 clamp01(const Vec3& v) {
    return {std::clamp(v.x, 0.0f, 1.0f), std::clamp(v.y, 0.0f, 1.0f), std::clamp(v.z, 0.0f, 1.0f)};
}

}  // namespace

TraceResult trace_ray(const AnalyticScene& scene, const EnvMap& env, const WarpSpec& warp,
                      const Vec3& origin, const Vec3& dir, int max_bounces) {
    (void)max_bounces; // single specular bounce by design: reflections sample
                       // the environment directly, never other geometry
    Hit best;
    for (const auto& s : scene.spheres) {
        float t;
        Vec3 n;
        if (intersect_sphere(s, origin, dir, t, n) && t < best.t) {
            best.t = t;
            best.normal = n;
            best.sphere = &s;
        }
    }
    if (scene.ground_plane && std::fabs(dir.z) > 1e-6f) {
        float t = (scene.plane_z - origin.z) / dir.z;
        if (t > 1e-4f && t < best.t) {
            Vec3 p = origin + dir * t;
            bool on_disc = scene.plane_radius <= 0.0f ||
                           p.x * p.x + p.y * p.y <= scene.plane_radius * scene.plane_radius;
            if (on_disc) {
                best.t = t;
                best.normal = {0.0f, 0.0f, origin.z >= scene.plane_z ? 1.0f : -1.0f};
                best.sphere = nullptr;
                best.plane = true;
            }
        }
    }

    TraceResult res;
    if (!std::isfinite(best.t)) {
        res.rgb = {1.0f, 1.0f, 1.0f}; // background convention: white
        return res;
    }
    res.hit = true;
    res.t = best.t;
    res.normal = best.normal;

    auto mirror_color = [&](const Vec3& n) {
        Vec3 r = reflect_dir(dir, n);
        Vec3 rw = warp_direction(warp, r);
        return envmap_eval(env, rw);
    };

    if (best.plane) {
        res.rgb = clamp01(hadamard(scene.plane_albedo, env.ambient_at(best.normal)));
        return res;
    }
    const Sphere& s = *best.sphere;
    switch (s.material) {
        case Material::Mirror:
            res.rgb = clamp01(mirror_color(best.normal));
            break;
        case Material::Lambertian:
            res.rgb = clamp01(hadamard(s.albedo, env.ambient_at(best.normal)));
            break;
        case Material::Glossy: {
            Vec3 spec = mirror_color(best.normal);
            Vec3 diff = hadamard(s.albedo, env.ambient_at(best.normal));
            res.rgb = clamp01(spec * s.reflectivity + diff * (1.0f - s.reflectivity));
            break;
        }
    }
    return res;
}

void render_view(const AnalyticScene& scene, const EnvMap& env, const WarpSpec& warp,
                 const CameraPose& pose, Image& rgb_out, Image& mask_out) {
    if (!pose.valid()) throw ConfigError("invalid camera pose");
    rgb_out = Image(pose.width, pose.height, 3);
    mask_out = Image(pose.width, pose.height, 1);
    par::parallel_for(static_cast<int64_t>(pose.width) * pose.height, [&](int64_t idx) {
        int x = static_cast<int>(idx % pose.width);
        int y = static_cast<int>(idx / pose.width);
        Ray ray = pose.pixel_ray(static_cast<float>(x), static_cast<float>(y));
        TraceResult tr = trace_ray(scene, env, warp, ray.origin, ray.dir);
        rgb_out.at(x, y, 0) = tr.rgb.x;
        rgb_out.at(x, y, 1) = tr.rgb.y;
        rgb_out.at(x, y, 2) = tr.rgb.z;
        mask_out.at(x, y, 0) = tr.hit ? 1.0f : 0.0f;
    });
}

}  // namespace specrf
