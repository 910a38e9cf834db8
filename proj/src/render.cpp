#include "specrf/render.hpp"

#include "specrf/par.hpp"
#include "specrf/rng.hpp"

namespace specrf {

Image render_image(const ModelView& mv, int image, const CameraPose& pose,
                   const SamplerConfig& cfg, uint64_t seed) {
    if (!pose.valid()) throw ConfigError("invalid camera pose");
    PrefilterParams pf = PrefilterParams::for_camera(pose.focal_px);
    std::vector<float> atten = erf_attenuation(mv.field->grid, pf);
    Image img(pose.width, pose.height, 3);
    int64_t n = static_cast<int64_t>(pose.width) * pose.height;
    par::parallel_for(n, [&](int64_t px) {
        int x = static_cast<int>(px % pose.width);
        int y = static_cast<int>(px / pose.width);
        Pcg32 rng = substream(seed, "eval", static_cast<uint64_t>(px));
        Ray ray = pose.pixel_ray(static_cast<float>(x), static_cast<float>(y));
        RayResult r = render_ray(mv, image, ray, cfg, atten, rng);
        img.at(x, y, 0) = r.rgb.x;
        img.at(x, y, 1) = r.rgb.y;
        img.at(x, y, 2) = r.rgb.z;
    });
    return img;
}

}  // namespace specrf
