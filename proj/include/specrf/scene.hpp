#pragma once

#include <vector>

#include "specrf/common.hpp"
#include "specrf/array.hpp"
#include "specrf/geometry.hpp"
#include "specrf/rng.hpp"

namespace specrf {

// Procedural illumination: a smooth directional ambient base plus a few
// Gaussian lobes. Everything is analytic so renders double as ground truth.
struct EnvMap {
    struct Lobe {
        Vec3 dir;   // unit
        float sigma = 0.3f;
        Vec3 rgb;   // peak intensity, >= 0
    };
    Vec3 ambient{0.3f, 0.3f, 0.3f};   // constant term, >= 0
    Vec3 gradient{0.0f, 0.0f, 0.0f};  // scales with hemisphere factor, >= 0
    Vec3 gradient_dir{0.0f, 0.0f, 1.0f};
    std::vector<Lobe> lobes;
    float azimuth = 0.0f; // rotation of the whole map around +z

    // Diffuse-only part, used for lambertian shading.
    Vec3 ambient_at(const Vec3& n) const {
        float h = 0.5f * (1.0f + dot(n, gradient_dir));
        return ambient + gradient * h;
    }
};

Vec3 envmap_eval(const EnvMap& env, const Vec3& dir);

// Per-image direction warp: a small global rotation composed with a
// band-limited tangential perturbation. Emulates the residual inconsistencies
// a relighting model leaves between its output frames. Zero magnitudes give
// the exact identity.
struct WarpSpec {
    Vec3 axis{0.0f, 0.0f, 1.0f};
    float angle = 0.0f; // <= eps_rot
    float eps_warp = 0.0f;
    struct Wave {
        Vec3 c;      // tangential coefficient direction; sum of |c| is 1
        Vec3 u;      // frequency axis
        float freq = 1.0f;
        float phase = 0.0f;
    };
    std::vector<Wave> waves;

    bool is_identity() const { return angle == 0.0f && eps_warp == 0.0f; }
};

WarpSpec make_warp(uint64_t seed, float eps_rot, float eps_warp);
Vec3 warp_direction(const WarpSpec& w, const Vec3& dir);

enum class Material { Mirror, Lambertian, Glossy };

struct Sphere {
    Vec3 center;
    float radius = 1.0f;
    Material material = Material::Mirror;
    Vec3 albedo{0.8f, 0.8f, 0.8f};
    float reflectivity = 1.0f; // glossy mix weight, in [0,1]
};

struct AnalyticScene {
    std::vector<Sphere> spheres;
    bool ground_plane = false;
    float plane_z = -1.0f;
    float plane_radius = 0.0f; // disc about the z axis; <= 0 means infinite
    Vec3 plane_albedo{0.5f, 0.5f, 0.5f};

    void validate() const;
};

struct TraceResult {
    Vec3 rgb;
    bool hit = false;
    Vec3 normal;
    float t = -1.0f;
};

// Analytic ground-truth tracer: one specular bounce, reflected rays go
// straight to the environment (after the per-image warp), misses are white.
TraceResult trace_ray(const AnalyticScene& scene, const EnvMap& env, const WarpSpec& warp,
                      const Vec3& origin, const Vec3& dir, int max_bounces = 2);

// Full-frame render plus binary hit mask (mask=1 exactly where a primary ray
// hits geometry).
void render_view(const AnalyticScene& scene, const EnvMap& env, const WarpSpec& warp,
                 const CameraPose& pose, Image& rgb_out, Image& mask_out);

}  // namespace specrf
