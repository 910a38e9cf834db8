#pragma once

#include <cmath>

#include "specrf/common.hpp"

namespace specrf {

struct Ray {
    Vec3 origin;
    Vec3 dir; // unit
};

// Look-at camera. Basis is rebuilt from (position, target, up) on demand so
// poses round-trip through the text manifest exactly.
struct CameraPose {
    Vec3 position;
    Vec3 target;      // look-at point
    Vec3 up{0.0f, 0.0f, 1.0f};
    float focal_px = 0.0f; // focal length in pixels
    int width = 0;
    int height = 0;

    struct Basis {
        Vec3 forward, right, down;
    };

    Basis basis() const {
        Vec3 f = normalized(target - position);
        Vec3 u = up;
        if (std::fabs(dot(f, normalized(u))) > 0.999f) u = Vec3{1.0f, 0.0f, 0.0f};
        Vec3 r = normalized(cross(f, u));
        Vec3 d = cross(f, r); // completes a right-handed frame, points image-down
        return {f, r, d};
    }

    // Ray through an arbitrary (possibly fractional) pixel coordinate, where
    // (px, py) = (0, 0) is the center of the top-left pixel.
    Ray pixel_ray(float px, float py) const {
        Basis b = basis();
        float dx = (px - 0.5f * (width - 1)) / focal_px;
        float dy = (py - 0.5f * (height - 1)) / focal_px;
        return {position, normalized(b.forward + b.right * dx + b.down * dy)};
    }

    bool valid() const {
        return focal_px > 0.0f && width > 0 && height > 0 && norm(target - position) > 1e-6f;
    }
};

inline float focal_from_fov(float fov_deg, int width) {
    return 0.5f * static_cast<float>(width) /
           std::tan(0.5f * fov_deg * 3.14159265358979323846f / 180.0f);
}

}  // namespace specrf
