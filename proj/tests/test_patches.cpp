#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "sws/errors.hpp"
#include "sws/patches.hpp"
#include "sws/rng.hpp"

using namespace sws;
using namespace sws::patches;

namespace {

scene::Image make_image(int h, int w, int ch = 3) {
    scene::Image img;
    img.height = h;
    img.width = w;
    img.channels = ch;
    img.data.assign(static_cast<std::size_t>(h) * w * ch, 0.0f);
    return img;
}

}  // namespace

TEST_CASE("axis_intervals: the documented stride law") {
    // L=8, g=3, overlap 0.5 -> side 4, starts {0, 2, 4}, last ends at 8.
    // Oracle: direct enumeration of side = 2L/(g+1), stride = L/(g+1).
    const auto iv = axis_intervals(8, 3, 0.5);
    REQUIRE(iv.size() == 3);
    CHECK(iv[0] == std::pair<int, int>{0, 4});
    CHECK(iv[1] == std::pair<int, int>{2, 6});
    CHECK(iv[2] == std::pair<int, int>{4, 8});

    // overlap 0 tiles exactly
    const auto tiles = axis_intervals(8, 2, 0.0);
    REQUIRE(tiles.size() == 2);
    CHECK(tiles[0] == std::pair<int, int>{0, 4});
    CHECK(tiles[1] == std::pair<int, int>{4, 8});

    CHECK_THROWS_AS(axis_intervals(8, 0, 0.5), InvalidSpec);
    CHECK_THROWS_AS(axis_intervals(8, 3, 0.95), InvalidSpec);
    CHECK_THROWS_AS(axis_intervals(2, 7, 0.5), DegenerateGrid);
}

TEST_CASE("axis_intervals: bounds and ordering for any overlap, full coverage at 0.5") {
    for (int length : {7, 8, 16, 31, 64, 100}) {
        for (int g : {1, 2, 3, 5, 7}) {
            for (double ov : {0.0, 0.25, 0.5}) {
                CAPTURE(length);
                CAPTURE(g);
                CAPTURE(ov);
                const auto iv = axis_intervals(length, g, ov);
                std::vector<bool> covered(static_cast<std::size_t>(length), false);
                int prev_start = 0;
                for (const auto& [s, e] : iv) {
                    CHECK(s >= 0);
                    CHECK(e <= length);
                    CHECK(s >= prev_start);  // non-decreasing starts
                    prev_start = s;
                    for (int p = s; p < e; ++p) covered[static_cast<std::size_t>(p)] = true;
                }
                CHECK(iv.back().second == length);  // final patch clamped to L
                // the coverage guarantee is stated for the default 50% overlap
                if (ov == 0.5)
                    for (bool c : covered) CHECK(c);
            }
        }
    }
}

TEST_CASE("extract_pyramid: patch count law") {
    const scene::Image img = make_image(64, 64);
    PyramidConfig cfg;
    const PatchPyramid pyr = extract_pyramid(img, cfg);
    CHECK(pyr.count() == 9 + 25 + 49 + 1);  // 84
    CHECK(pyr.feature_dim() == 16 * 16 * 3);
    CHECK(pyr.features.size() == static_cast<std::size_t>(84) * 16 * 16 * 3);

    // same count for any image size
    const PatchPyramid pyr2 = extract_pyramid(make_image(37, 53), cfg);
    CHECK(pyr2.count() == 84);

    PyramidConfig no_full = cfg;
    no_full.include_full = false;
    CHECK(extract_pyramid(img, no_full).count() == 83);

    PyramidConfig with_nine = cfg;
    with_nine.scales = {3, 5, 7, 9};
    CHECK(extract_pyramid(img, with_nine).count() == 9 + 25 + 49 + 81 + 1);

    CHECK_THROWS_AS(extract_pyramid(make_image(0, 10), cfg), InvalidSpec);
}

TEST_CASE("extract_pyramid: coverage at every scale") {
    const scene::Image img = make_image(48, 40);
    const PatchPyramid pyr = extract_pyramid(img);
    for (int g : {3, 5, 7}) {
        std::vector<bool> covered(static_cast<std::size_t>(img.height) * img.width, false);
        for (const auto& r : pyr.rects) {
            if (r.scale != g) continue;
            for (int y = r.y0; y < r.y1; ++y)
                for (int x = r.x0; x < r.x1; ++x)
                    covered[static_cast<std::size_t>(y) * img.width + x] = true;
        }
        for (bool c : covered) CHECK(c);
    }
}

TEST_CASE("extract_pyramid: resampled features are per-patch local") {
    scene::Image img = make_image(32, 32, 1);
    Rng rng(3);
    for (auto& v : img.data) v = static_cast<float>(rng.uniform());

    PyramidConfig cfg;
    cfg.scales = {2};
    cfg.overlap = 0.0;
    cfg.include_full = false;
    cfg.patch_side = 8;
    const PatchPyramid base = extract_pyramid(img, cfg);

    // changing pixels outside patch 0 leaves row 0 unchanged
    scene::Image poked = img;
    poked.at(31, 31, 0) += 1.0f;  // inside patch 3, outside patch 0
    const PatchPyramid after = extract_pyramid(poked, cfg);
    const std::size_t dim = static_cast<std::size_t>(base.feature_dim());
    for (std::size_t i = 0; i < dim; ++i) CHECK(base.features[i] == after.features[i]);
    bool changed = false;
    for (std::size_t i = 3 * dim; i < 4 * dim; ++i)
        if (base.features[i] != after.features[i]) changed = true;
    CHECK(changed);
}

TEST_CASE("embed_patches: affine map contract") {
    scene::Image img = make_image(16, 16, 1);
    PyramidConfig cfg;
    cfg.scales = {2};
    cfg.overlap = 0.0;
    cfg.include_full = true;
    cfg.patch_side = 4;
    const PatchPyramid pyr = extract_pyramid(img, cfg);  // zero image

    PatchEmbedder emb;
    emb.in_dim = pyr.feature_dim();
    emb.out_dim = 6;
    emb.weight.assign(static_cast<std::size_t>(emb.in_dim) * emb.out_dim, 0.1f);
    emb.bias = {1, 2, 3, 4, 5, 6};

    const auto feats = embed_patches(pyr, emb);
    REQUIRE(feats.size() == static_cast<std::size_t>(pyr.count()) * 6);
    // zero image: every row equals the bias
    for (int p = 0; p < pyr.count(); ++p)
        for (int o = 0; o < 6; ++o)
            CHECK(feats[static_cast<std::size_t>(p) * 6 + o] ==
                  doctest::Approx(emb.bias[static_cast<std::size_t>(o)]));

    // permuting two input patches permutes the corresponding rows
    scene::Image img2 = make_image(16, 16, 1);
    Rng rng(5);
    for (auto& v : img2.data) v = static_cast<float>(rng.uniform());
    PatchPyramid pyr2 = extract_pyramid(img2, cfg);
    PatchEmbedder emb2 = emb;
    Rng wr(9);
    for (auto& w : emb2.weight) w = static_cast<float>(wr.uniform(-0.1, 0.1));
    const auto before = embed_patches(pyr2, emb2);
    const std::size_t dim = static_cast<std::size_t>(pyr2.feature_dim());
    for (std::size_t i = 0; i < dim; ++i)
        std::swap(pyr2.features[0 * dim + i], pyr2.features[1 * dim + i]);
    const auto after = embed_patches(pyr2, emb2);
    for (int o = 0; o < 6; ++o) {
        CHECK(after[0 * 6 + static_cast<std::size_t>(o)] ==
              doctest::Approx(before[1 * 6 + static_cast<std::size_t>(o)]));
        CHECK(after[1 * 6 + static_cast<std::size_t>(o)] ==
              doctest::Approx(before[0 * 6 + static_cast<std::size_t>(o)]));
    }

    PatchEmbedder wrong = emb;
    wrong.in_dim = 5;
    CHECK_THROWS_AS(embed_patches(pyr, wrong), ShapeError);
}
