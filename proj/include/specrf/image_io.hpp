#pragma once

#include <string>

#include "specrf/array.hpp"

namespace specrf {

// 8-bit PNG, 1 or 3 channels; values clamped from [0,1].
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

// Lossless float companion (PFM, little-endian, 1 or 3 channels).
void write_pfm(const std::string& path, const Image& img);
Image read_pfm(const std::string& path);

}  // namespace specrf
