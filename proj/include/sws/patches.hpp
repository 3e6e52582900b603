#pragma once

#include <vector>

#include "sws/scenegen.hpp"

namespace sws::patches {

struct PatchRect {
    int scale;  // grid size g; 0 marks the whole-image patch
    int row, col;
    int x0, y0, x1, y1;  // pixel bounds, half-open [x0, x1) x [y0, y1)
};

struct PyramidConfig {
    std::vector<int> scales{3, 5, 7};
    double overlap = 0.5;
    bool include_full = true;
    int patch_side = 16;  // common resample size fed to the embedder
};

/// Multi-scale overlapping patches plus (optionally) the whole image.
/// `features` holds each patch resampled to patch_side^2 and flattened,
/// P x (side * side * channels), scale-major row-major patch order.
struct PatchPyramid {
    PyramidConfig config;
    int channels = 0;
    std::vector<PatchRect> rects;
    std::vector<float> features;
    int count() const { return static_cast<int>(rects.size()); }
    int feature_dim() const {
        return config.patch_side * config.patch_side * channels;
    }
};

/// Uniform patch grid along one axis of length L: g patches of side
/// L / (1 + (g-1) * (1 - overlap)) spaced side * (1 - overlap) apart,
/// computed in real arithmetic, rounded to the nearest pixel, with the final
/// patch clamped to end at L. Returns {start, end} pairs.
std::vector<std::pair<int, int>> axis_intervals(int length, int grid, double overlap);

/// Extracts the pyramid and bilinearly resamples every patch to the common
/// side. Throws DegenerateGrid when rounding produces an empty patch.
PatchPyramid extract_pyramid(const scene::Image& image, const PyramidConfig& config = {});

/// Affine patch embedder standing in for a pretrained CNN; trained end to
/// end by the model, applied here for inference-style use and tests.
struct PatchEmbedder {
    int in_dim = 0;
    int out_dim = 0;
    std::vector<float> weight;  // in_dim x out_dim, row-major
    std::vector<float> bias;    // out_dim
};

/// P x H feature matrix; row order equals patch order.
std::vector<float> embed_patches(const PatchPyramid& pyramid, const PatchEmbedder& embedder);

}  // namespace sws::patches
