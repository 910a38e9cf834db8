#pragma once

#include <vector>

#include "specrf/array.hpp"
#include "specrf/geometry.hpp"

namespace specrf {

// Channel widths of the per-frame denoiser input. Latents are 64x64x8 (the
// autoencoder producing them is out of scope; tests use synthetic content).
inline constexpr int kLatentRes = 64;
inline constexpr int kLatentChannels = 8;
inline constexpr int kRaymapChannels = 7;  // origin xyz, direction xyz, focal
inline constexpr int kPackedChannels = 2 * kLatentChannels + kRaymapChannels + 1;

// Camera pose as a 64x64x7 grid: each cell carries the ray through the
// center of its 8x8 source-pixel block (for 512x512 intrinsics), plus the
// focal length. Block-center rays rather than averaged ones keep directions
// unit-length. The source resolution must be square and divisible by 64.
Image build_raymap(const CameraPose& pose);

// One 64x64 single-channel mask per frame: all ones for the reference frame,
// all zeros otherwise.
std::vector<Image> build_reference_mask(int n_frames, int ref_index);

// Per-frame channel concat [noisy latent | clean latent | raymap | ref mask].
// The reference frame is never denoised: its first block carries the clean
// latent regardless of what noisy_latents holds there. drop_reference erases
// the reference designation (mask channel all zero on every frame) for the
// unconditional CFG variant; the attention masking itself belongs to the
// out-of-scope network.
std::vector<Image> pack_conditioning(const std::vector<Image>& noisy_latents,
                                     const std::vector<Image>& clean_latents,
                                     const std::vector<CameraPose>& poses, int ref_index,
                                     bool drop_reference = false);

}  // namespace specrf
