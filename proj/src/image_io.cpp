#include "specrf/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <vector>

#include "specrf/common.hpp"

namespace specrf {

namespace {

struct FileCloser {
    FILE* f = nullptr;
    ~FileCloser() {
        if (f) std::fclose(f);
    }
};

}  // namespace

void write_png(const std::string& path, const Image& img) {
    if (img.channels != 1 && img.channels != 3)
        throw IoError("png writer supports 1 or 3 channels: " + path);
    FileCloser fc{std::fopen(path.c_str(), "wb")};
    if (!fc.f) throw IoError("cannot open for writing: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng init failed: " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("png write failed: " + path);
    }
    png_init_io(png, fc.f);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8,
                 img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<png_byte> row(static_cast<size_t>(img.width) * img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                float v = std::clamp(img.at(x, y, c), 0.0f, 1.0f);
                row[static_cast<size_t>(x) * img.channels + c] =
                    static_cast<png_byte>(std::lround(v * 255.0f));
            }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image read_png(const std::string& path) {
    FileCloser fc{std::fopen(path.c_str(), "rb")};
    if (!fc.f) throw IoError("cannot open: " + path);
    png_byte header[8];
    if (std::fread(header, 1, 8, fc.f) != 8 || png_sig_cmp(header, 0, 8))
        throw IoError("not a png file: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng init failed: " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("png read failed: " + path);
    }
    png_init_io(png, fc.f);
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    png_byte color = png_get_color_type(png, info);
    png_byte depth = png_get_bit_depth(png, info);

    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    int channels = png_get_channels(png, info);
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("unsupported channel count in " + path);
    }

    Image img(static_cast<int>(w), static_cast<int>(h), channels);
    std::vector<png_byte> row(static_cast<size_t>(w) * channels);
    for (png_uint_32 y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (png_uint_32 x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c)
                img.at(static_cast<int>(x), static_cast<int>(y), c) =
                    static_cast<float>(row[static_cast<size_t>(x) * channels + c]) / 255.0f;
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_pfm(const std::string& path, const Image& img) {
    if (img.channels != 1 && img.channels != 3)
        throw IoError("pfm writer supports 1 or 3 channels: " + path);
    FileCloser fc{std::fopen(path.c_str(), "wb")};
    if (!fc.f) throw IoError("cannot open for writing: " + path);
    std::fprintf(fc.f, "%s\n%d %d\n-1.0\n", img.channels == 1 ? "Pf" : "PF", img.width,
                 img.height);
    // PFM stores rows bottom-to-top.
    for (int y = img.height - 1; y >= 0; --y) {
        const float* row = img.data.data() + static_cast<size_t>(y) * img.width * img.channels;
        if (std::fwrite(row, sizeof(float), static_cast<size_t>(img.width) * img.channels,
                        fc.f) != static_cast<size_t>(img.width) * img.channels)
            throw IoError("short write: " + path);
    }
}

Image read_pfm(const std::string& path) {
    FileCloser fc{std::fopen(path.c_str(), "rb")};
    if (!fc.f) throw IoError("cannot open: " + path);
    char tag[3] = {0, 0, 0};
    int w = 0, h = 0;
    float scale = 0.0f;
    if (std::fscanf(fc.f, "%2s %d %d %f", tag, &w, &h, &scale) != 4)
        throw IoError("bad pfm header: " + path);
    int channels;
    if (std::strcmp(tag, "PF") == 0)
        channels = 3;
    else if (std::strcmp(tag, "Pf") == 0)
        channels = 1;
    else
        throw IoError("bad pfm tag: " + path);
    if (scale > 0.0f) throw IoError("big-endian pfm unsupported: " + path);
    if (w <= 0 || h <= 0) throw IoError("bad pfm size: " + path);
    std::fgetc(fc.f); // single whitespace after the scale line

    Image img(w, h, channels);
    for (int y = h - 1; y >= 0; --y) {
        float* row = img.data.data() + static_cast<size_t>(y) * w * channels;
        if (std::fread(row, sizeof(float), static_cast<size_t>(w) * channels, fc.f) !=
            static_cast<size_t>(w) * channels)
            throw IoError("short read: " + path);
    }
    return img;
}

}  // namespace specrf
