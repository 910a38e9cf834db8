#pragma once

#include <cstddef>
#include <vector>

#include "specrf/common.hpp"

namespace specrf {

// Row-major H x W x C float image. Pixel (x, y), channel c.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<float> data;

    Image() = default;
    Image(int w, int h, int c, float fill = 0.0f)
        : width(w), height(h), channels(c),
          data(static_cast<size_t>(w) * h * c, fill) {}

    float& at(int x, int y, int c) {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    float at(int x, int y, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    size_t pixel_count() const { return static_cast<size_t>(width) * height; }
    bool empty() const { return data.empty(); }
};

}  // namespace specrf
