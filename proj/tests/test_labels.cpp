#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "sws/errors.hpp"
#include "sws/io.hpp"
#include "sws/labels.hpp"
#include "sws/scenegen.hpp"

using namespace sws;
using namespace sws::labels;

namespace {

geom::DepthMap constant_map(int h, int w, float fill, bool normalized = true) {
    geom::DepthMap m;
    m.height = h;
    m.width = w;
    m.values.assign(static_cast<std::size_t>(h) * w, fill);
    m.normalized = normalized;
    return m;
}

std::filesystem::path temp_path(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("build_labels: closed form on a constant-depth map") {
    const geom::DepthMap map = constant_map(20, 20, 0.25f);
    const std::vector<geom::BBox> boxes = {geom::BBox(0.1, 0.1, 0.3, 0.5),
                                           geom::BBox(0.5, 0.2, 0.9, 0.8)};
    const SRLabels lab = build_labels("s0", boxes, map, 3, {3, 15});

    CHECK(lab.n == 2);
    CHECK(lab.dims == 3);
    CHECK(lab.oce_at(0, 0) == doctest::Approx(0.2));
    CHECK(lab.oce_at(0, 1) == doctest::Approx(0.3));
    CHECK(lab.oce_at(0, 2) == doctest::Approx(0.25));
    CHECK(lab.oce_at(1, 0) == doctest::Approx(0.7));
    CHECK(lab.oce_at(1, 1) == doctest::Approx(0.5));
    CHECK(lab.oce_at(1, 2) == doctest::Approx(0.25));

    // antisymmetry with a zero diagonal, and the consistency triple, all
    // exact on the stored values
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (int d = 0; d < 3; ++d) {
                CHECK(lab.rpe_at(i, j, d) == -lab.rpe_at(j, i, d));
                CHECK(lab.rpe_at(i, j, d) == lab.oce_at(i, d) - lab.oce_at(j, d));
                for (int c : {3, 15})
                    CHECK(lab.bin_at(c, i, j, d) ==
                          geom::quantize(lab.rpe_at(i, j, d), lab.bin_specs.at(c)));
            }
    for (int d = 0; d < 3; ++d) CHECK(lab.rpe_at(0, 0, d) == 0.0f);

    CHECK_NOTHROW(lab.validate());
    CHECK_THROWS_AS(build_labels("s0", {}, map, 3, {3}), NoObjects);
    CHECK_THROWS_AS(build_labels("s0", boxes, map, 4, {3}), InvalidSpec);
}

TEST_CASE("build_labels: 2D mode ignores depth") {
    const geom::DepthMap raw = constant_map(4, 4, 3.0f, false);
    const SRLabels lab = build_labels("s0", {geom::BBox(0.0, 0.0, 0.5, 0.5)}, raw, 2, {7});
    CHECK(lab.dims == 2);
    CHECK(lab.oce_at(0, 0) == doctest::Approx(0.25));
}

TEST_CASE("labels vs. scene oracle on generated scenes") {
    scene::SceneSpec spec;
    spec.n_objects = 6;
    int checked = 0;
    for (int k = 0; k < 20; ++k) {
        const scene::Scene sc = scene::generate_scene(1000 + static_cast<std::uint64_t>(k), spec);
        const geom::DepthMap depth = scene::render_depth(sc);
        const geom::DepthMap norm = geom::normalize_depth(depth, sc.room_depth_m);
        std::vector<geom::BBox> boxes;
        for (const auto& o : sc.objects) boxes.push_back(scene::normalized_bbox(o, sc.camera));
        const SRLabels lab = build_labels(sc.scene_id, boxes, norm, 3, {15});

        for (std::size_t i = 0; i < sc.objects.size(); ++i) {
            const auto& o = sc.objects[i];
            // analytic oracle: the projected true center, unit-normalized
            const double u = (sc.camera.focal_px * o.center_m[0] / o.center_m[2] +
                              sc.camera.principal_x) / sc.camera.width_px;
            const double v = (sc.camera.focal_px * o.center_m[1] / o.center_m[2] +
                              sc.camera.principal_y) / sc.camera.height_px;
            CHECK(std::abs(lab.oce_at(static_cast<int>(i), 0) - u) < 0.02);
            CHECK(std::abs(lab.oce_at(static_cast<int>(i), 1) - v) < 0.02);
            ++checked;
        }
    }
    CHECK(checked == 120);
}

TEST_CASE("label file roundtrip is bit-exact and deterministic") {
    const geom::DepthMap map = constant_map(16, 16, 0.5f);
    std::vector<geom::BBox> boxes;
    for (int i = 0; i < 4; ++i)
        boxes.push_back(geom::BBox(0.05 + 0.2 * i, 0.1, 0.15 + 0.2 * i, 0.4 + 0.05 * i));
    const SRLabels lab = build_labels("scene-x", boxes, map, 3, {3, 7, 15, 30});

    const auto p1 = temp_path("sws_lab1.srlb");
    const auto p2 = temp_path("sws_lab2.srlb");
    write_labels(lab, p1);
    write_labels(lab, p2);
    CHECK(io::read_file(p1) == io::read_file(p2));

    const SRLabels back = read_labels(p1);
    CHECK(back.scene_id == lab.scene_id);
    CHECK(back.n == lab.n);
    CHECK(back.dims == lab.dims);
    CHECK(back.oce == lab.oce);
    CHECK(back.rpe == lab.rpe);
    CHECK(back.rpe_bins == lab.rpe_bins);

    std::filesystem::remove(p1);
    std::filesystem::remove(p2);
}

TEST_CASE("read_labels rejects corrupt and unsupported files") {
    const geom::DepthMap map = constant_map(16, 16, 0.5f);
    const std::vector<geom::BBox> boxes = {geom::BBox(0.1, 0.1, 0.3, 0.3),
                                           geom::BBox(0.6, 0.5, 0.9, 0.9)};
    const SRLabels lab = build_labels("s", boxes, map, 3, {3});
    const auto path = temp_path("sws_corrupt.srlb");

    SUBCASE("antisymmetry violation") {
        write_labels(lab, path);
        auto bytes = io::read_file(path);
        // flip a bit inside the rpe block (header + oce precede it)
        io::Reader r(bytes);
        r.str(4);
        r.u16();
        const std::uint32_t hlen = r.u32();
        const std::size_t rpe_off = 10 + hlen + lab.oce.size() * 4;
        bytes[rpe_off + 2] ^= 0x40;
        io::write_file(path, bytes);
        CHECK_THROWS_AS(read_labels(path), CorruptLabels);
    }
    SUBCASE("truncation") {
        write_labels(lab, path);
        auto bytes = io::read_file(path);
        bytes.resize(bytes.size() - 7);
        io::write_file(path, bytes);
        CHECK_THROWS_AS(read_labels(path), CorruptLabels);
    }
    SUBCASE("version mismatch") {
        write_labels(lab, path);
        auto bytes = io::read_file(path);
        bytes[4] = 99;
        io::write_file(path, bytes);
        CHECK_THROWS_AS(read_labels(path), UnsupportedVersion);
    }
    SUBCASE("wrong magic") {
        io::write_file(path, std::string("JUNKJUNKJUNK"));
        CHECK_THROWS_AS(read_labels(path), CorruptLabels);
    }
    std::filesystem::remove(path);
}

TEST_CASE("dataset_depth_max") {
    const auto dir = std::filesystem::temp_directory_path();
    std::vector<std::filesystem::path> paths;
    int idx = 0;
    for (float peak : {5.0f, 10.0f, 7.5f}) {
        geom::DepthMap m = constant_map(4, 4, 1.0f, false);
        m.values[5] = peak;
        const auto p = dir / ("sws_depth_" + std::to_string(idx++) + ".dpth");
        scene::write_depth(m, p);
        paths.push_back(p);
    }
    CHECK(dataset_depth_max(paths) == doctest::Approx(10.0));
    CHECK(dataset_depth_max({paths[1]}) == doctest::Approx(10.0));
    CHECK(dataset_depth_max({paths[0]}) == doctest::Approx(5.0));

    // order invariance
    std::vector<std::filesystem::path> reversed(paths.rbegin(), paths.rend());
    CHECK(dataset_depth_max(reversed) == dataset_depth_max(paths));

    CHECK_THROWS_AS(dataset_depth_max({}), NoData);
    for (const auto& p : paths) std::filesystem::remove(p);
}

TEST_CASE("depth rank order is preserved for well-separated objects") {
    scene::SceneSpec spec;
    spec.n_objects = 6;
    int agree = 0, total = 0;
    for (int k = 0; k < 40; ++k) {
        const scene::Scene sc = scene::generate_scene(7000 + static_cast<std::uint64_t>(k), spec);
        const geom::DepthMap norm =
            geom::normalize_depth(scene::render_depth(sc), sc.room_depth_m);
        std::vector<geom::BBox> boxes;
        for (const auto& o : sc.objects) boxes.push_back(scene::normalized_bbox(o, sc.camera));
        const SRLabels lab = build_labels(sc.scene_id, boxes, norm, 3, {});
        for (std::size_t i = 0; i < sc.objects.size(); ++i)
            for (std::size_t j = 0; j < sc.objects.size(); ++j) {
                if (i == j) continue;
                const double dz = sc.objects[i].center_m[2] - sc.objects[j].center_m[2];
                if (std::abs(dz) < 0.2 * sc.room_depth_m) continue;
                ++total;
                const float weak = lab.rpe_at(static_cast<int>(i), static_cast<int>(j), 2);
                if ((weak < 0) == (dz < 0)) ++agree;
            }
    }
    REQUIRE(total > 50);
    CHECK(static_cast<double>(agree) / total >= 0.95);
}
