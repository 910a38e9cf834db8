#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "specrf/dataset.hpp"
#include "specrf/image_io.hpp"

using namespace specrf;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const char* tag) {
    auto p = fs::temp_directory_path() / (std::string("specrf_test_") + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

std::vector<char> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Specular drift a warp causes, in pixels. For each mirror pixel the warped
// render shows environment content belonging to a neighboring pixel of the
// clean render; the shift solves warp(r) - r = J * d in least squares, where
// J holds the per-pixel finite differences of the reflected direction.
bool mirror_reflection_at(const DatasetConfig& cfg, const CameraPose& pose, float px, float py,
                          Vec3& refl_out) {
    WarpSpec identity;
    const Sphere& mirror = cfg.scene.spheres[0];
    Ray r = pose.pixel_ray(px, py);
    TraceResult hit = trace_ray(cfg.scene, cfg.env, identity, r.origin, r.dir);
    if (!hit.hit) return false;
    Vec3 p = r.origin + r.dir * hit.t;
    if (std::fabs(norm(p - mirror.center) - mirror.radius) > 1e-3f) return false;
    refl_out = normalized(reflect_dir(r.dir, hit.normal));
    return true;
}

double specular_displacement_px(const DatasetConfig& cfg, const WarpSpec& warp,
                                const CameraPose& pose) {
    double sum = 0.0;
    int count = 0;
    for (int y = 0; y + 1 < pose.height; ++y) {
        for (int x = 0; x + 1 < pose.width; ++x) {
            Vec3 r0, rx, ry;
            if (!mirror_reflection_at(cfg, pose, static_cast<float>(x), static_cast<float>(y), r0))
                continue;
            if (!mirror_reflection_at(cfg, pose, static_cast<float>(x + 1), static_cast<float>(y), rx))
                continue;
            if (!mirror_reflection_at(cfg, pose, static_cast<float>(x), static_cast<float>(y + 1), ry))
                continue;
            Vec3 v = warp_direction(warp, r0) - r0;
            Vec3 jx = rx - r0, jy = ry - r0;
            double a = dot(jx, jx), b = dot(jx, jy), c = dot(jy, jy);
            double det = a * c - b * b;
            if (det < 1e-12) continue;
            double bx = dot(jx, v), by = dot(jy, v);
            double dx = (c * bx - b * by) / det;
            double dy = (a * by - b * bx) / det;
            sum += std::sqrt(dx * dx + dy * dy);
            ++count;
        }
    }
    REQUIRE(count > 0);
    return sum / count;
}

}  // namespace

TEST_CASE("dataset generation writes the full file tree") {
    DatasetConfig cfg;
    cfg.n_train = 4;
    cfg.n_test = 2;
    std::string dir = temp_dir("tree");
    DatasetManifest m = generate_dataset(cfg, dir);

    CHECK(m.frames.size() == 6);
    CHECK(m.train_frames().size() == 4);
    CHECK(m.test_frames().size() == 2);
    int refs = 0;
    for (const auto& f : m.frames) refs += f.reference ? 1 : 0;
    CHECK(refs == 1);
    CHECK(m.reference_frame().index == 0);
    CHECK(m.reference_frame().kind == "train");
    CHECK(m.reference_frame().warp_seed == -1);
    for (const auto* f : m.test_frames()) CHECK(f->warp_seed == -1);
    for (const auto* f : m.train_frames())
        if (f->index > 0) CHECK(f->warp_seed == f->index);

    for (const auto& f : m.frames) {
        CHECK(fs::exists(dir + "/" + f.image_png));
        CHECK(fs::exists(dir + "/" + f.image_pfm));
        CHECK(fs::exists(dir + "/" + f.mask_png));
    }
    CHECK(fs::exists(dir + "/manifest.txt"));
    fs::remove_all(dir);
}

TEST_CASE("manifest round-trips through the text format") {
    DatasetConfig cfg;
    cfg.n_train = 3;
    cfg.n_test = 1;
    std::string dir = temp_dir("roundtrip");
    DatasetManifest a = generate_dataset(cfg, dir);
    DatasetManifest b = load_manifest(dir + "/manifest.txt");

    CHECK(b.resolution == a.resolution);
    CHECK(b.n_train == a.n_train);
    CHECK(b.n_test == a.n_test);
    CHECK(b.seed == a.seed);
    CHECK(b.eps_rot == doctest::Approx(a.eps_rot));
    CHECK(b.frames.size() == a.frames.size());
    for (size_t i = 0; i < a.frames.size(); ++i) {
        const auto& fa = a.frames[i];
        const auto& fb = b.frames[i];
        CHECK(fb.kind == fa.kind);
        CHECK(fb.index == fa.index);
        CHECK(fb.reference == fa.reference);
        CHECK(fb.warp_seed == fa.warp_seed);
        CHECK(norm(fb.pose.position - fa.pose.position) < 1e-5f);
        CHECK(norm(fb.pose.target - fa.pose.target) < 1e-5f);
        CHECK(fb.pose.focal_px == doctest::Approx(fa.pose.focal_px));
        CHECK(fb.image_pfm == fa.image_pfm);
    }
    fs::remove_all(dir);
}

TEST_CASE("identical configs generate byte-identical datasets") {
    DatasetConfig cfg;
    cfg.n_train = 3;
    cfg.n_test = 1;
    std::string d1 = temp_dir("det1");
    std::string d2 = temp_dir("det2");
    generate_dataset(cfg, d1);
    generate_dataset(cfg, d2);

    for (const auto& entry : fs::directory_iterator(d1)) {
        std::string name = entry.path().filename().string();
        auto a = slurp(d1 + "/" + name);
        auto b = slurp(d2 + "/" + name);
        CHECK_MESSAGE(a == b, "file differs: ", name);
    }
    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST_CASE("zero-epsilon datasets are mutually consistent") {
    DatasetConfig cfg;
    cfg.eps_rot = 0.0f;
    cfg.eps_warp = 0.0f;
    // two different warp seeds collapse to the same identity warp
    WarpSpec w1 = make_warp(cfg.seed + 1, cfg.eps_rot, cfg.eps_warp);
    WarpSpec w2 = make_warp(cfg.seed + 2, cfg.eps_rot, cfg.eps_warp);
    CameraPose pose;
    pose.position = {2.8f, 1.4f, 2.2f};
    pose.target = {0.0f, 0.0f, 0.45f};
    pose.width = pose.height = 64;
    pose.focal_px = focal_from_fov(cfg.fov_deg, 64);

    Image rgb1, mask1, rgb2, mask2;
    render_view(cfg.scene, cfg.env, w1, pose, rgb1, mask1);
    render_view(cfg.scene, cfg.env, w2, pose, rgb2, mask2);
    CHECK(std::memcmp(rgb1.data.data(), rgb2.data.data(), rgb1.data.size() * sizeof(float)) == 0);
}

TEST_CASE("default warp magnitudes put specular drift in the 1-4 px band") {
    DatasetConfig cfg;
    std::string dir = temp_dir("drift");
    DatasetManifest m = generate_dataset(cfg, dir);

    double total = 0.0;
    int n = 0;
    for (const auto* f : m.train_frames()) {
        if (f->warp_seed < 0) continue;
        WarpSpec w = make_warp(cfg.seed + static_cast<uint64_t>(f->warp_seed), cfg.eps_rot,
                               cfg.eps_warp);
        total += specular_displacement_px(cfg, w, f->pose);
        ++n;
    }
    REQUIRE(n == cfg.n_train - 1);
    double mean = total / n;
    CHECK(mean >= 1.0);
    CHECK(mean <= 4.0);
    fs::remove_all(dir);
}

TEST_CASE("pfm files preserve the rendered floats exactly") {
    DatasetConfig cfg;
    cfg.n_train = 2;
    cfg.n_test = 1;
    std::string dir = temp_dir("pfm");
    DatasetManifest m = generate_dataset(cfg, dir);

    const FrameRecord& f = m.reference_frame();
    Image stored = read_pfm(dir + "/" + f.image_pfm);
    WarpSpec identity;
    Image rgb, mask;
    render_view(cfg.scene, cfg.env, identity, f.pose, rgb, mask);
    REQUIRE(stored.data.size() == rgb.data.size());
    CHECK(std::memcmp(stored.data.data(), rgb.data.data(), rgb.data.size() * sizeof(float)) == 0);
    fs::remove_all(dir);
}

TEST_CASE("boundary exclusion radius follows the resolution scaling") {
    CHECK(boundary_exclusion_radius(512) == 7);
    CHECK(boundary_exclusion_radius(256) == 4);
    CHECK(boundary_exclusion_radius(64) == 1);
    CHECK(boundary_exclusion_radius(16) == 1); // floor at one pixel
}

TEST_CASE("boundary exclusion marks rings around the mask edge") {
    // 8x8 mask with a 4x4 block: at radius 1 only edge-adjacent pixels (both
    // sides) are excluded; the block's 2x2 core joins at radius 2.
    Image mask(8, 8, 1, 0.0f);
    for (int y = 2; y < 6; ++y)
        for (int x = 2; x < 6; ++x) mask.at(x, y, 0) = 1.0f;

    auto band1 = boundary_exclusion_map(mask, 1);
    auto at = [&](const std::vector<uint8_t>& m, int x, int y) { return m[y * 8 + x]; };

    CHECK(at(band1, 2, 2) == 1);  // block corner touches outside
    CHECK(at(band1, 3, 3) == 0);  // core is clear of the edge
    CHECK(at(band1, 1, 3) == 1);  // outside pixel hugging the edge
    CHECK(at(band1, 0, 3) == 0);  // two steps out
    CHECK(at(band1, 0, 0) == 0);

    auto band2 = boundary_exclusion_map(mask, 2);
    CHECK(at(band2, 3, 3) == 1);  // core reached
    CHECK(at(band2, 0, 3) == 1);  // second outside ring reached
    CHECK(at(band2, 0, 0) == 0);  // corner is 4-distance 3 from the nearest edge pixel
}

TEST_CASE("load_views returns images, masks, and exclusion maps per split") {
    DatasetConfig cfg;
    cfg.n_train = 3;
    cfg.n_test = 2;
    std::string dir = temp_dir("loader");
    generate_dataset(cfg, dir);
    DatasetManifest m = load_manifest(dir + "/manifest.txt");

    auto train = load_views(m, true);
    auto test = load_views(m, false);
    CHECK(train.size() == 3);
    CHECK(test.size() == 2);
    for (const auto& v : train) {
        CHECK(v.rgb.width == cfg.resolution);
        CHECK(v.rgb.channels == 3);
        CHECK(v.mask.channels == 1);
        CHECK(v.excluded.size() == v.rgb.pixel_count());
        // the mask has an edge somewhere, so some pixel is excluded and the
        // far corner background is not
        int sum = 0;
        for (uint8_t e : v.excluded) sum += e;
        CHECK(sum > 0);
        CHECK(sum < static_cast<int>(v.excluded.size()));
    }
    fs::remove_all(dir);
}
