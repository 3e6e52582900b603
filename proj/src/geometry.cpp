#include "sws/geometry.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "sws/errors.hpp"

namespace sws::geom {

namespace {
constexpr double kCenterBinTau = 1e-6;
}

BBox::BBox(double x1_, double y1_, double x2_, double y2_) : x1(x1_), y1(y1_), x2(x2_), y2(y2_) {
    if (!(0.0 <= x1 && x1 <= x2 && x2 <= 1.0) || !(0.0 <= y1 && y1 <= y2 && y2 <= 1.0))
        throw InvalidSpec("BBox corners must satisfy 0 <= min <= max <= 1");
    if (!((x2 - x1) * (y2 - y1) > 0.0)) throw InvalidSpec("BBox must have positive area");
}

float DepthMap::max_value() const {
    float m = 0.0f;
    for (float v : values) m = std::max(m, v);
    return m;
}

std::pair<double, double> normalize_pixel(int px, int py, int extent_x, int extent_y) {
    if (extent_x <= 0 || extent_y <= 0) throw InvalidDimensions("pixel extents must be positive");
    return {static_cast<double>(px) / extent_x, static_cast<double>(py) / extent_y};
}

DepthMap normalize_depth(const DepthMap& map, double global_max) {
    if (!(global_max > 0.0)) throw InvalidNormalizer("depth normalizer must be positive");
    DepthMap out = map;
    for (float& v : out.values) {
        if (static_cast<double>(v) > global_max)
            throw NormalizerTooSmall("depth value exceeds the dataset normalizer");
        v = static_cast<float>(static_cast<double>(v) / global_max);
    }
    out.normalized = true;
    return out;
}

Centroid centroid_2d(const BBox& box) {
    Centroid c;
    c.dims = 2;
    c.coords = {(box.x1 + box.x2) / 2.0, (box.y1 + box.y2) / 2.0, 0.0};
    return c;
}

Centroid centroid_3d(const BBox& box, const DepthMap& map) {
    if (!map.normalized) throw InvalidSpec("centroid_3d requires a normalized depth map");
    const int col_lo = std::max(0, static_cast<int>(std::lround(box.x1 * map.width)));
    const int col_hi = std::min(map.width - 1, static_cast<int>(std::lround(box.x2 * map.width)));
    const int row_lo = std::max(0, static_cast<int>(std::lround(box.y1 * map.height)));
    const int row_hi = std::min(map.height - 1, static_cast<int>(std::lround(box.y2 * map.height)));
    if (col_lo > col_hi || row_lo > row_hi) throw EmptyBox("box covers no pixel");

    double sum = 0.0;
    for (int i = row_lo; i <= row_hi; ++i)
        for (int j = col_lo; j <= col_hi; ++j) sum += static_cast<double>(map.at(i, j));
    const double count = static_cast<double>(row_hi - row_lo + 1) * (col_hi - col_lo + 1);

    Centroid c = centroid_2d(box);
    c.dims = 3;
    c.coords[2] = sum / count;
    return c;
}

RelPosVec relative_position(const Centroid& a, const Centroid& b) {
    if (a.dims != b.dims) throw DimensionError("centroid dimensionality mismatch");
    RelPosVec r;
    r.dims = a.dims;
    for (int i = 0; i < a.dims; ++i)
        r.delta[static_cast<std::size_t>(i)] =
            a.coords[static_cast<std::size_t>(i)] - b.coords[static_cast<std::size_t>(i)];
    return r;
}

BinSpec make_bin_spec(double lambda, int num_classes) {
    if (num_classes < 3) throw InvalidSpec("bin class count must be at least 3");
    if (!(lambda > 1.0)) throw InvalidSpec("bin lambda must exceed 1");

    BinSpec spec;
    spec.lambda = lambda;
    spec.num_classes = num_classes;

    if (num_classes == 3) {
        spec.edges = {-1.0, -kCenterBinTau, kCenterBinTau, 1.0};
        spec.widths = {1.0 - kCenterBinTau, 2.0 * kCenterBinTau, 1.0 - kCenterBinTau};
        return spec;
    }

    const int c_count = num_classes;
    std::vector<double> raw(static_cast<std::size_t>(c_count));
    double total = 0.0;
    for (int c = 0; c < c_count; ++c) {
        const double dist = std::abs(static_cast<double>(c) - c_count / 2.0);
        const double k = c_count - dist + 1.0;
        raw[static_cast<std::size_t>(c)] = std::pow(lambda, -k) - std::pow(lambda, -(k + 1.0));
        total += raw[static_cast<std::size_t>(c)];
    }

    spec.widths.resize(raw.size());
    spec.edges.resize(raw.size() + 1);
    spec.edges[0] = -1.0;
    const double scale = 2.0 / total;
    double acc = -1.0;
    for (std::size_t c = 0; c < raw.size(); ++c) {
        spec.widths[c] = raw[c] * scale;
        acc += spec.widths[c];
        spec.edges[c + 1] = acc;
    }
    spec.edges.back() = 1.0;  // pin the final edge against accumulation error
    return spec;
}

int quantize(double v, const BinSpec& spec) {
    if (!(v >= -1.0 && v <= 1.0)) throw OutOfRange("quantize input outside [-1, 1]");
    // upper_bound over interior edges gives the half-open interval; v == 1
    // lands past the last interior edge and stays in the closed last bin.
    const auto begin = spec.edges.begin() + 1;
    const auto end = spec.edges.end() - 1;
    const auto it = std::upper_bound(begin, end, v);
    return static_cast<int>(it - begin);
}

double dequantize(int c, const BinSpec& spec) {
    if (c < 0 || c >= spec.num_classes) throw InvalidClass("bin class index out of range");
    return (spec.edges[static_cast<std::size_t>(c)] + spec.edges[static_cast<std::size_t>(c) + 1]) / 2.0;
}

std::string BinSpec::to_json() const {
    nlohmann::ordered_json j;
    j["lambda"] = lambda;
    j["num_classes"] = num_classes;
    j["widths"] = widths;
    j["edges"] = edges;
    return j.dump();
}

BinSpec BinSpec::from_json(const std::string& s) {
    const auto j = nlohmann::json::parse(s);
    BinSpec spec;
    spec.lambda = j.at("lambda").get<double>();
    spec.num_classes = j.at("num_classes").get<int>();
    spec.widths = j.at("widths").get<std::vector<double>>();
    spec.edges = j.at("edges").get<std::vector<double>>();
    if (spec.edges.size() != spec.widths.size() + 1 ||
        static_cast<int>(spec.widths.size()) != spec.num_classes)
        throw CorruptLabels("bin spec fields are inconsistent");
    return spec;
}

}  // namespace sws::geom
