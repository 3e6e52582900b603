#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sws/errors.hpp"
#include "sws/geometry.hpp"
#include "sws/rng.hpp"

using namespace sws;
using namespace sws::geom;

TEST_CASE("normalize_pixel divides component-wise by the extents") {
    auto [x, y] = normalize_pixel(50, 100, 100, 200);
    CHECK(x == doctest::Approx(0.5));
    CHECK(y == doctest::Approx(0.5));

    auto [zx, zy] = normalize_pixel(0, 0, 7, 13);
    CHECK(zx == 0.0);
    CHECK(zy == 0.0);

    auto [bx, by] = normalize_pixel(100, 200, 100, 200);
    CHECK(bx == 1.0);
    CHECK(by == 1.0);

    CHECK_THROWS_AS(normalize_pixel(1, 1, 0, 10), InvalidDimensions);
}

TEST_CASE("normalize_depth scales by the dataset maximum") {
    DepthMap map;
    map.height = 1;
    map.width = 3;
    map.values = {2.5f, 10.0f, 0.0f};

    const DepthMap out = normalize_depth(map, 10.0);
    CHECK(out.normalized);
    CHECK(out.values[0] == doctest::Approx(0.25));
    CHECK(out.values[1] == doctest::Approx(1.0));

    DepthMap constant;
    constant.height = 1;
    constant.width = 2;
    constant.values = {4.0f, 4.0f};
    const DepthMap ones = normalize_depth(constant, 4.0);
    CHECK(ones.values[0] == 1.0f);
    CHECK(ones.values[1] == 1.0f);

    CHECK_THROWS_AS(normalize_depth(map, 0.0), InvalidNormalizer);
    CHECK_THROWS_AS(normalize_depth(map, -1.0), InvalidNormalizer);
    CHECK_THROWS_AS(normalize_depth(map, 5.0), NormalizerTooSmall);
}

TEST_CASE("centroid_2d is the box midpoint") {
    const Centroid c = centroid_2d(BBox(0.2, 0.4, 0.6, 0.8));
    CHECK(c.dims == 2);
    CHECK(c[0] == doctest::Approx(0.4));
    CHECK(c[1] == doctest::Approx(0.6));

    const Centroid full = centroid_2d(BBox(0, 0, 1, 1));
    CHECK(full[0] == doctest::Approx(0.5));
    CHECK(full[1] == doctest::Approx(0.5));

    CHECK_THROWS_AS(BBox(0.3, 0.1, 0.3, 0.9), InvalidSpec);  // zero area
    CHECK_THROWS_AS(BBox(0.5, 0.1, 0.4, 0.9), InvalidSpec);  // inverted
    CHECK_THROWS_AS(BBox(-0.1, 0.1, 0.4, 0.9), InvalidSpec);
}

namespace {

DepthMap normalized_map(int h, int w, float fill) {
    DepthMap m;
    m.height = h;
    m.width = w;
    m.values.assign(static_cast<std::size_t>(h) * w, fill);
    m.normalized = true;
    return m;
}

}  // namespace

TEST_CASE("centroid_3d averages depth over the box") {
    SUBCASE("constant depth") {
        const DepthMap m = normalized_map(10, 10, 0.3f);
        const Centroid c = centroid_3d(BBox(0.2, 0.2, 0.7, 0.7), m);
        CHECK(c.dims == 3);
        CHECK(c[2] == doctest::Approx(0.3));
    }
    SUBCASE("two half planes with equal pixel counts") {
        DepthMap m = normalized_map(4, 10, 0.0f);
        // columns 1..4 hold 0.2, columns 5..8 hold 0.6
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 10; ++j) m.at(i, j) = j <= 4 ? 0.2f : 0.6f;
        // box over columns 1..8 (rounded from [0.1, 0.8] * 10), rows 0..4
        const Centroid c = centroid_3d(BBox(0.1, 0.0, 0.8, 1.0), m);
        CHECK(c[2] == doctest::Approx(0.4));
    }
    SUBCASE("linear ramp matches an explicit pixel loop") {
        DepthMap m = normalized_map(32, 32, 0.0f);
        for (int i = 0; i < 32; ++i)
            for (int j = 0; j < 32; ++j) m.at(i, j) = static_cast<float>(j) / 31.0f;
        const BBox box(0.25, 0.25, 0.75, 0.75);
        const Centroid c = centroid_3d(box, m);

        // independent oracle: explicit double-precision summation over the
        // same membership rule
        const int col_lo = static_cast<int>(std::lround(box.x1 * 32));
        const int col_hi = static_cast<int>(std::lround(box.x2 * 32));
        const int row_lo = static_cast<int>(std::lround(box.y1 * 32));
        const int row_hi = static_cast<int>(std::lround(box.y2 * 32));
        double sum = 0.0;
        int count = 0;
        for (int i = row_lo; i <= row_hi; ++i)
            for (int j = col_lo; j <= col_hi; ++j) {
                sum += static_cast<double>(m.at(i, j));
                ++count;
            }
        CHECK(c[2] == doctest::Approx(sum / count).epsilon(1e-12));
        // the ramp midpoint in the box, up to pixel quantization
        CHECK(c[2] == doctest::Approx(0.5).epsilon(0.02));
    }
    SUBCASE("empty box") {
        // hugging the right edge: both rounded columns land past the grid
        const DepthMap m = normalized_map(100, 100, 0.5f);
        CHECK_THROWS_AS(centroid_3d(BBox(0.995, 0.5, 0.999, 0.9), m), EmptyBox);
    }
    SUBCASE("mean depth bounded by box extremes") {
        Rng rng(7);
        DepthMap m = normalized_map(16, 16, 0.0f);
        for (auto& v : m.values) v = static_cast<float>(rng.uniform());
        for (int trial = 0; trial < 50; ++trial) {
            const double x1 = rng.uniform(0.0, 0.8);
            const double y1 = rng.uniform(0.0, 0.8);
            const BBox box(x1, y1, x1 + rng.uniform(0.15, 0.2), y1 + rng.uniform(0.15, 0.2));
            const Centroid c = centroid_3d(box, m);
            float lo = 1.0f, hi = 0.0f;
            const int col_lo = std::max(0, static_cast<int>(std::lround(box.x1 * 16)));
            const int col_hi = std::min(15, static_cast<int>(std::lround(box.x2 * 16)));
            const int row_lo = std::max(0, static_cast<int>(std::lround(box.y1 * 16)));
            const int row_hi = std::min(15, static_cast<int>(std::lround(box.y2 * 16)));
            for (int i = row_lo; i <= row_hi; ++i)
                for (int j = col_lo; j <= col_hi; ++j) {
                    lo = std::min(lo, m.at(i, j));
                    hi = std::max(hi, m.at(i, j));
                }
            CHECK(c[2] >= lo);
            CHECK(c[2] <= hi);
        }
    }
}

TEST_CASE("relative_position subtracts component-wise and is antisymmetric") {
    Centroid a, b;
    a.dims = b.dims = 3;
    a.coords = {0.1, 0.2, 0.3};
    b.coords = {0.4, 0.1, 0.3};
    const RelPosVec r = relative_position(a, b);
    CHECK(r[0] == doctest::Approx(-0.3));
    CHECK(r[1] == doctest::Approx(0.1));
    CHECK(r[2] == doctest::Approx(0.0));

    const RelPosVec self = relative_position(a, a);
    for (int d = 0; d < 3; ++d) CHECK(self[d] == 0.0);

    Centroid two;
    two.dims = 2;
    CHECK_THROWS_AS(relative_position(a, two), DimensionError);

    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        Centroid p, q;
        p.dims = q.dims = 3;
        for (int d = 0; d < 3; ++d) {
            p.coords[static_cast<std::size_t>(d)] = rng.uniform();
            q.coords[static_cast<std::size_t>(d)] = rng.uniform();
        }
        const RelPosVec pq = relative_position(p, q);
        const RelPosVec qp = relative_position(q, p);
        for (int d = 0; d < 3; ++d) CHECK(pq[d] == -qp[d]);  // exact
    }
}

TEST_CASE("make_bin_spec: C=3 uses the explicit interval list") {
    const BinSpec spec = make_bin_spec(1.5, 3);
    REQUIRE(spec.edges.size() == 4);
    CHECK(spec.edges[0] == -1.0);
    CHECK(spec.edges[1] == doctest::Approx(-1e-6));
    CHECK(spec.edges[2] == doctest::Approx(1e-6));
    CHECK(spec.edges[3] == 1.0);

    CHECK(quantize(-0.5, spec) == 0);
    CHECK(quantize(0.0, spec) == 1);
    CHECK(quantize(0.7, spec) == 2);
}

TEST_CASE("make_bin_spec: raw widths follow the log-scale formula") {
    // independent oracle: direct evaluation at long double precision
    const int c_count = 7;
    const long double lambda = 1.5L;
    long double raw[7];
    long double total = 0.0L;
    for (int c = 0; c < c_count; ++c) {
        const long double dist = std::fabs(static_cast<long double>(c) - c_count / 2.0L);
        const long double k = c_count - dist + 1.0L;
        raw[c] = std::pow(lambda, -k) - std::pow(lambda, -(k + 1.0L));
        total += raw[c];
    }
    // frozen reference values for the center and extreme bins
    CHECK(static_cast<double>(raw[3]) == doctest::Approx(0.0159292).epsilon(1e-4));
    CHECK(static_cast<double>(raw[0]) == doctest::Approx(0.0537560).epsilon(1e-4));

    const BinSpec spec = make_bin_spec(1.5, 7);
    for (int c = 0; c < c_count; ++c)
        CHECK(spec.widths[static_cast<std::size_t>(c)] ==
              doctest::Approx(static_cast<double>(raw[c] * 2.0L / total)).epsilon(1e-12));
}

TEST_CASE("bin spec structural invariants for all supported C") {
    for (int c_count : {3, 7, 15, 30}) {
        CAPTURE(c_count);
        const BinSpec spec = make_bin_spec(1.5, c_count);
        REQUIRE(static_cast<int>(spec.widths.size()) == c_count);
        REQUIRE(static_cast<int>(spec.edges.size()) == c_count + 1);
        CHECK(spec.edges.front() == -1.0);
        CHECK(spec.edges.back() == 1.0);
        double sum = 0.0;
        for (double w : spec.widths) sum += w;
        CHECK(sum == doctest::Approx(2.0).epsilon(1e-9));
        for (std::size_t i = 1; i < spec.edges.size(); ++i) CHECK(spec.edges[i] > spec.edges[i - 1]);
        if (c_count > 3) {
            // widths grow with distance from the center index
            for (int c = 0; c + 1 < c_count; ++c) {
                const double d0 = std::abs(c - c_count / 2.0);
                const double d1 = std::abs(c + 1 - c_count / 2.0);
                if (d1 > d0)
                    CHECK(spec.widths[static_cast<std::size_t>(c + 1)] >=
                          spec.widths[static_cast<std::size_t>(c)]);
                if (d1 < d0)
                    CHECK(spec.widths[static_cast<std::size_t>(c + 1)] <=
                          spec.widths[static_cast<std::size_t>(c)]);
            }
        }
    }
    CHECK_THROWS_AS(make_bin_spec(1.5, 2), InvalidSpec);
    CHECK_THROWS_AS(make_bin_spec(1.0, 7), InvalidSpec);
    CHECK_THROWS_AS(make_bin_spec(0.5, 7), InvalidSpec);
}

TEST_CASE("quantize and dequantize") {
    for (int c_count : {3, 7, 15, 30}) {
        CAPTURE(c_count);
        const BinSpec spec = make_bin_spec(1.5, c_count);
        CHECK(quantize(-1.0, spec) == 0);
        CHECK(quantize(1.0, spec) == c_count - 1);
        CHECK_THROWS_AS(quantize(1.5, spec), OutOfRange);
        CHECK_THROWS_AS(quantize(-1.0001, spec), OutOfRange);
        CHECK_THROWS_AS(dequantize(c_count, spec), InvalidClass);
        CHECK_THROWS_AS(dequantize(-1, spec), InvalidClass);

        // roundtrip: every class midpoint lies strictly inside its bin
        for (int c = 0; c < c_count; ++c) CHECK(quantize(dequantize(c, spec), spec) == c);

        // partition: every v maps to exactly one class whose interval holds it
        for (int i = 0; i <= 1000; ++i) {
            const double v = -1.0 + 2.0 * i / 1000.0;
            const int c = quantize(v, spec);
            CHECK(v >= spec.edges[static_cast<std::size_t>(c)]);
            if (c < c_count - 1) CHECK(v < spec.edges[static_cast<std::size_t>(c) + 1]);
        }

        // sign fidelity outside the center bin
        const int center = quantize(0.0, spec);
        for (int i = 0; i <= 400; ++i) {
            const double v = -1.0 + 2.0 * i / 400.0;
            const int c = quantize(v, spec);
            if (c == center) continue;
            const double back = dequantize(c, spec);
            CHECK(((v < 0 && back < 0) || (v > 0 && back > 0)));
        }
    }

    const BinSpec spec3 = make_bin_spec(1.5, 3);
    CHECK(dequantize(1, spec3) == doctest::Approx(0.0));
}

TEST_CASE("bin spec JSON roundtrip") {
    const BinSpec spec = make_bin_spec(1.5, 15);
    const BinSpec back = BinSpec::from_json(spec.to_json());
    CHECK(back.lambda == spec.lambda);
    CHECK(back.num_classes == spec.num_classes);
    CHECK(back.edges == spec.edges);
    CHECK(back.widths == spec.widths);
}
