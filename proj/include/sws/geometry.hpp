#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace sws::geom {

/// Axis-aligned box in unit-normalized image coordinates.
/// Convention used throughout the toolkit: x is the horizontal image axis
/// (normalized by the image width), y is the vertical axis pointing down
/// (normalized by the image height). Requires 0 <= x1 <= x2 <= 1,
/// 0 <= y1 <= y2 <= 1 and positive area.
struct BBox {
    double x1, y1, x2, y2;

    BBox(double x1_, double y1_, double x2_, double y2_);
    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
};

/// Object centroid in unit-normalized space, 2 or 3 components in [0,1].
struct Centroid {
    std::array<double, 3> coords{0.0, 0.0, 0.0};
    int dims = 2;

    double operator[](int i) const { return coords[static_cast<std::size_t>(i)]; }
};

/// Signed pairwise centroid difference, each component in [-1, 1].
struct RelPosVec {
    std::array<double, 3> delta{0.0, 0.0, 0.0};
    int dims = 2;

    double operator[](int i) const { return delta[static_cast<std::size_t>(i)]; }
};

/// Depth grid, row-major, values[i * width + j] for row i, column j.
struct DepthMap {
    int height = 0;
    int width = 0;
    std::vector<float> values;
    bool normalized = false;

    float at(int row, int col) const { return values[static_cast<std::size_t>(row) * width + col]; }
    float& at(int row, int col) { return values[static_cast<std::size_t>(row) * width + col]; }
    float max_value() const;
};

/// Log-scale bin partition of [-1, 1] into num_classes intervals. Interior
/// edges are half-open [edge, next); the last bin is closed on the right.
/// Center bins are narrowest so nearby distances get finer classes.
struct BinSpec {
    double lambda = 1.5;
    int num_classes = 0;
    std::vector<double> widths;  // per-class width, sums to 2
    std::vector<double> edges;   // num_classes + 1 entries, edges[0] = -1, back() = +1

    std::string to_json() const;
    static BinSpec from_json(const std::string& s);
};

/// Component-wise division of an integer pixel coordinate by the per-axis
/// extents: (px / extent_x, py / extent_y), each in [0, 1]. For images the
/// x extent is the width and the y extent is the height.
std::pair<double, double> normalize_pixel(int px, int py, int extent_x, int extent_y);

/// Divides every depth value by global_max (computed over the whole dataset)
/// and flags the result normalized. Throws InvalidNormalizer if
/// global_max <= 0, NormalizerTooSmall if any value exceeds it.
DepthMap normalize_depth(const DepthMap& map, double global_max);

/// Box midpoint, (x_c, y_c).
Centroid centroid_2d(const BBox& box);

/// (x_c, y_c) from the box midpoint; z_c is the arithmetic mean of the
/// normalized depths of all pixels whose integer coordinates fall inside the
/// box: columns [round(x1*W), round(x2*W)], rows [round(y1*H), round(y2*H)],
/// both inclusive and clipped to the grid. Throws EmptyBox if no pixel
/// qualifies.
Centroid centroid_3d(const BBox& box, const DepthMap& map);

/// Component-wise a - b. Antisymmetric: relative_position(a,b) is exactly
/// the negation of relative_position(b,a).
RelPosVec relative_position(const Centroid& a, const Centroid& b);

/// Builds the bin partition for a given lambda > 1 and class count C >= 3.
/// C == 3 uses the explicit intervals [-1,-tau), [-tau,tau], (tau,1] with
/// tau = 1e-6 (a measure-zero singleton bin at 0 would be unusable with
/// continuous inputs). For C > 3 the raw width of class c is
///   b_c = lambda^-(C - |c - C/2| + 1) - lambda^-(C - |c - C/2| + 2)
/// rescaled by 2 / sum(b) so the edges span exactly [-1, 1].
BinSpec make_bin_spec(double lambda, int num_classes);

/// Class index for v in [-1, 1]. Throws OutOfRange outside that interval.
int quantize(double v, const BinSpec& spec);

/// Midpoint of class c. Throws InvalidClass if c is out of range.
double dequantize(int c, const BinSpec& spec);

}  // namespace sws::geom
