#include "specrf/conditioning.hpp"

#include <string>

#include "specrf/par.hpp"

namespace specrf {

Image build_raymap(const CameraPose& pose) {
    if (!pose.valid()) throw ConfigError("raymap needs a valid camera pose");
    if (pose.width != pose.height)
        throw ConfigError("raymap source intrinsics must be square");
    if (pose.width % kLatentRes != 0)
        throw ConfigError("raymap source resolution must be divisible by " +
                          std::to_string(kLatentRes));
    int factor = pose.width / kLatentRes;
    float half = 0.5f * static_cast<float>(factor) - 0.5f;  // block center offset
    Image out(kLatentRes, kLatentRes, kRaymapChannels);
    for (int y = 0; y < kLatentRes; ++y)
        for (int x = 0; x < kLatentRes; ++x) {
            Ray r = pose.pixel_ray(static_cast<float>(x * factor) + half,
                                   static_cast<float>(y * factor) + half);
            out.at(x, y, 0) = r.origin.x;
            out.at(x, y, 1) = r.origin.y;
            out.at(x, y, 2) = r.origin.z;
            out.at(x, y, 3) = r.dir.x;
            out.at(x, y, 4) = r.dir.y;
            out.at(x, y, 5) = r.dir.z;
            out.at(x, y, 6) = pose.focal_px;
        }
    return out;
}

std::vector<Image> build_reference_mask(int n_frames, int ref_index) {
    if (n_frames < 1) throw ConfigError("mask set needs at least one frame");
    if (ref_index < 0 || ref_index >= n_frames)
        throw ConfigError("reference index " + std::to_string(ref_index) +
                          " outside [0, " + std::to_string(n_frames) + ")");
    std::vector<Image> masks;
    masks.reserve(static_cast<size_t>(n_frames));
    for (int i = 0; i < n_frames; ++i)
        masks.emplace_back(kLatentRes, kLatentRes, 1, i == ref_index ? 1.0f : 0.0f);
    return masks;
}

namespace {

void check_latent(const Image& im, const char* what, size_t i) {
    if (im.width != kLatentRes || im.height != kLatentRes ||
        im.channels != kLatentChannels)
        throw ShapeError(std::string(what) + " " + std::to_string(i) + " is " +
                         std::to_string(im.width) + "x" + std::to_string(im.height) + "x" +
                         std::to_string(im.channels) + ", expected " +
                         std::to_string(kLatentRes) + "x" + std::to_string(kLatentRes) +
                         "x" + std::to_string(kLatentChannels));
}

}  // namespace

std::vector<Image> pack_conditioning(const std::vector<Image>& noisy_latents,
                                     const std::vector<Image>& clean_latents,
                                     const std::vector<CameraPose>& poses, int ref_index,
                                     bool drop_reference) {
    size_t n = noisy_latents.size();
    if (n == 0) throw ShapeError("nothing to pack");
    if (clean_latents.size() != n || poses.size() != n)
        throw ShapeError("frame count mismatch: " + std::to_string(n) + " noisy, " +
                         std::to_string(clean_latents.size()) + " clean, " +
                         std::to_string(poses.size()) + " poses");
    if (ref_index < 0 || ref_index >= static_cast<int>(n))
        throw ConfigError("reference index out of range");
    for (size_t i = 0; i < n; ++i) {
        check_latent(noisy_latents[i], "noisy latent", i);
        check_latent(clean_latents[i], "clean latent", i);
    }
    // Raymaps are built up front: their pose validation must not throw from
    // inside the parallel region.
    std::vector<Image> raymaps(n);
    for (size_t i = 0; i < n; ++i) raymaps[i] = build_raymap(poses[i]);

    std::vector<Image> packed(n);
    par::parallel_for(static_cast<int64_t>(n), [&](int64_t i) {
        size_t f = static_cast<size_t>(i);
        bool is_ref = static_cast<int>(f) == ref_index;
        const Image& z = is_ref ? clean_latents[f] : noisy_latents[f];
        const Image& raymap = raymaps[f];
        float mask = !drop_reference && is_ref ? 1.0f : 0.0f;
        Image out(kLatentRes, kLatentRes, kPackedChannels);
        for (int y = 0; y < kLatentRes; ++y)
            for (int x = 0; x < kLatentRes; ++x) {
                int c = 0;
                for (int k = 0; k < kLatentChannels; ++k) out.at(x, y, c++) = z.at(x, y, k);
                for (int k = 0; k < kLatentChannels; ++k)
                    out.at(x, y, c++) = clean_latents[f].at(x, y, k);
                for (int k = 0; k < kRaymapChannels; ++k)
                    out.at(x, y, c++) = raymap.at(x, y, k);
                out.at(x, y, c) = mask;
            }
        packed[f] = std::move(out);
    });
    return packed;
}

}  // namespace specrf
