#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "specrf/train.hpp"

namespace specrf {

namespace {

constexpr char kMagic[8] = {'S', 'R', 'F', 'C', 'K', 'P', 'T', '1'};
constexpr uint32_t kVersion = 1;

template <class T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is, const std::string& what) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw IoError("checkpoint truncated reading " + what);
    return v;
}

void put_block(std::ostream& os, const std::string& name, const float* data, size_t count) {
    put<uint32_t>(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<uint64_t>(os, count);
    os.write(reinterpret_cast<const char*>(data),
             static_cast<std::streamsize>(count * sizeof(float)));
}

void get_block(std::istream& is, const std::string& want_name, float* data,
               size_t want_count) {
    uint32_t name_len = get<uint32_t>(is, "block name length");
    if (name_len > 4096) throw IoError("checkpoint block name is implausibly long");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw IoError("checkpoint truncated reading block name");
    if (name != want_name)
        throw ShapeError("checkpoint block '" + name + "' does not match expected '" +
                         want_name + "'");
    uint64_t count = get<uint64_t>(is, "block '" + name + "' size");
    if (count != want_count)
        throw ShapeError("checkpoint block '" + name + "' holds " + std::to_string(count) +
                         " values, expected " + std::to_string(want_count));
    is.read(reinterpret_cast<char*>(data),
            static_cast<std::streamsize>(count * sizeof(float)));
    if (!is) throw IoError("checkpoint truncated reading block '" + name + "'");
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelState& state) {
    namespace fs = std::filesystem;
    std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot write " + tmp);
        os.write(kMagic, sizeof(kMagic));
        put<uint32_t>(os, kVersion);
        put<uint32_t>(os, static_cast<uint32_t>(state.mode));
        put<int64_t>(os, state.step);
        put<int64_t>(os, state.adam.step);
        put<uint32_t>(os, static_cast<uint32_t>(state.n_images));
        put<uint32_t>(os, static_cast<uint32_t>(state.store.segments.size()) + 2);
        for (const ParamSegment& seg : state.store.segments)
            put_block(os, seg.name, state.store.values.data() + seg.offset, seg.size);
        put_block(os, "adam.m", state.adam.m.data(), state.adam.m.size());
        put_block(os, "adam.v", state.adam.v.data(), state.adam.v.size());
        if (!os) throw IoError("write failed for " + tmp);
    }
    fs::rename(tmp, path);
}

void load_checkpoint(const std::string& path, ModelState& state) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw IoError(path + " is not a checkpoint file");
    uint32_t version = get<uint32_t>(is, "version");
    if (version != kVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version) +
                      " (this build reads version " + std::to_string(kVersion) + ")");
    uint32_t mode = get<uint32_t>(is, "mode");
    if (mode != static_cast<uint32_t>(state.mode))
        throw ConfigError("checkpoint was trained in mode '" +
                          std::string(embed_mode_name(static_cast<EmbedMode>(mode))) +
                          "' but the model is configured for '" +
                          std::string(embed_mode_name(state.mode)) + "'");
    int64_t step = get<int64_t>(is, "step");
    int64_t adam_step = get<int64_t>(is, "optimizer step");
    uint32_t n_images = get<uint32_t>(is, "image count");
    if (n_images != static_cast<uint32_t>(state.n_images))
        throw ShapeError("checkpoint holds " + std::to_string(n_images) +
                         " embedding rows, model expects " + std::to_string(state.n_images));
    uint32_t n_blocks = get<uint32_t>(is, "block count");
    if (n_blocks != state.store.segments.size() + 2)
        throw ShapeError("checkpoint holds " + std::to_string(n_blocks) +
                         " parameter blocks, model expects " +
                         std::to_string(state.store.segments.size() + 2));
    for (const ParamSegment& seg : state.store.segments)
        get_block(is, seg.name, state.store.values.data() + seg.offset, seg.size);
    get_block(is, "adam.m", state.adam.m.data(), state.adam.m.size());
    get_block(is, "adam.v", state.adam.v.data(), state.adam.v.size());
    state.step = step;
    state.adam.step = adam_step;
}

}  // namespace specrf
