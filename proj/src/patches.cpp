#include "sws/patches.hpp"

#include <algorithm>
#include <cmath>

#include "sws/errors.hpp"

namespace sws::patches {

std::vector<std::pair<int, int>> axis_intervals(int length, int grid, double overlap) {
    if (grid < 1) throw InvalidSpec("patch grid size must be at least 1");
    if (!(overlap >= 0.0 && overlap <= 0.9)) throw InvalidSpec("patch overlap must lie in [0, 0.9]");
    if (length < 1) throw InvalidSpec("image axis length must be positive");

    const double side = length / (1.0 + (grid - 1) * (1.0 - overlap));
    const double stride = side * (1.0 - overlap);
    std::vector<std::pair<int, int>> out;
    out.reserve(static_cast<std::size_t>(grid));
    const int side_px = static_cast<int>(std::lround(side));
    for (int k = 0; k < grid; ++k) {
        const int start = static_cast<int>(std::lround(k * stride));
        int end = (k == grid - 1) ? length : std::min(length, start + side_px);
        if (end <= start) throw DegenerateGrid("patch rounding produced an empty patch");
        out.emplace_back(start, end);
    }
    return out;
}

namespace {

/// Bilinear sample of channel ch at continuous position (x, y) in pixel
/// units local to the patch rect.
float sample_bilinear(const scene::Image& img, const PatchRect& r, double x, double y, int ch) {
    const double fx = std::clamp(x, 0.0, static_cast<double>(r.x1 - r.x0) - 1.0);
    const double fy = std::clamp(y, 0.0, static_cast<double>(r.y1 - r.y0) - 1.0);
    const int x0 = static_cast<int>(fx);
    const int y0 = static_cast<int>(fy);
    const int x1 = std::min(x0 + 1, r.x1 - r.x0 - 1);
    const int y1 = std::min(y0 + 1, r.y1 - r.y0 - 1);
    const double ax = fx - x0;
    const double ay = fy - y0;
    const auto px = [&](int yy, int xx) {
        return static_cast<double>(img.at(r.y0 + yy, r.x0 + xx, ch));
    };
    const double top = px(y0, x0) * (1.0 - ax) + px(y0, x1) * ax;
    const double bot = px(y1, x0) * (1.0 - ax) + px(y1, x1) * ax;
    return static_cast<float>(top * (1.0 - ay) + bot * ay);
}

}  // namespace

PatchPyramid extract_pyramid(const scene::Image& image, const PyramidConfig& config) {
    if (image.height < 1 || image.width < 1 || image.channels < 1)
        throw InvalidSpec("patch extraction requires a non-empty image");

    PatchPyramid pyr;
    pyr.config = config;
    pyr.channels = image.channels;

    for (int g : config.scales) {
        const auto rows = axis_intervals(image.height, g, config.overlap);
        const auto cols = axis_intervals(image.width, g, config.overlap);
        for (int r = 0; r < g; ++r)
            for (int c = 0; c < g; ++c)
                pyr.rects.push_back({g, r, c, cols[static_cast<std::size_t>(c)].first,
                                     rows[static_cast<std::size_t>(r)].first,
                                     cols[static_cast<std::size_t>(c)].second,
                                     rows[static_cast<std::size_t>(r)].second});
    }
    if (config.include_full) pyr.rects.push_back({0, 0, 0, 0, 0, image.width, image.height});

    const int side = config.patch_side;
    const std::size_t dim = static_cast<std::size_t>(side) * side * image.channels;
    pyr.features.assign(pyr.rects.size() * dim, 0.0f);
    for (std::size_t p = 0; p < pyr.rects.size(); ++p) {
        const PatchRect& r = pyr.rects[p];
        const double sx = static_cast<double>(r.x1 - r.x0) / side;
        const double sy = static_cast<double>(r.y1 - r.y0) / side;
        float* dst = pyr.features.data() + p * dim;
        for (int y = 0; y < side; ++y)
            for (int x = 0; x < side; ++x)
                for (int ch = 0; ch < image.channels; ++ch)
                    dst[(static_cast<std::size_t>(y) * side + x) * image.channels + ch] =
                        sample_bilinear(image, r, (x + 0.5) * sx - 0.5, (y + 0.5) * sy - 0.5, ch);
    }
    return pyr;
}

std::vector<float> embed_patches(const PatchPyramid& pyramid, const PatchEmbedder& embedder) {
    if (embedder.in_dim != pyramid.feature_dim())
        throw ShapeError("embedder input dim " + std::to_string(embedder.in_dim) +
                         " does not match patch feature dim " + std::to_string(pyramid.feature_dim()));
    if (embedder.weight.size() != static_cast<std::size_t>(embedder.in_dim) * embedder.out_dim ||
        embedder.bias.size() != static_cast<std::size_t>(embedder.out_dim))
        throw ShapeError("embedder parameter sizes are inconsistent");

    const int p_count = pyramid.count();
    const int in = embedder.in_dim;
    const int out = embedder.out_dim;
    std::vector<float> features(static_cast<std::size_t>(p_count) * out);
    for (int p = 0; p < p_count; ++p) {
        const float* row = pyramid.features.data() + static_cast<std::size_t>(p) * in;
        float* dst = features.data() + static_cast<std::size_t>(p) * out;
        for (int o = 0; o < out; ++o) dst[o] = embedder.bias[static_cast<std::size_t>(o)];
        for (int i = 0; i < in; ++i) {
            const float x = row[i];
            if (x == 0.0f) continue;
            const float* w = embedder.weight.data() + static_cast<std::size_t>(i) * out;
            for (int o = 0; o < out; ++o) dst[o] += x * w[o];
        }
    }
    return features;
}

}  // namespace sws::patches
