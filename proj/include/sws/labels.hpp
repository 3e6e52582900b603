#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sws/geometry.hpp"

namespace sws::labels {

/// Per-scene weak-supervision targets. Tensors are stored in f32 so a file
/// round-trip is exact; rpe[i][j][d] is computed from the rounded oce rows,
/// which keeps the antisymmetry and consistency invariants bit-exact.
struct SRLabels {
    std::string scene_id;
    int n = 0;  // object count
    int dims = 2;
    std::vector<std::string> object_ids;  // row order; "o<i>" fallback when absent
    std::vector<float> oce;            // n x dims
    std::vector<float> rpe;            // n x n x dims
    std::map<int, std::vector<std::uint16_t>> rpe_bins;  // C -> n x n x dims
    std::map<int, geom::BinSpec> bin_specs;

    int object_index(const std::string& id) const;

    float oce_at(int i, int d) const { return oce[static_cast<std::size_t>(i) * dims + d]; }
    float rpe_at(int i, int j, int d) const {
        return rpe[(static_cast<std::size_t>(i) * n + j) * dims + d];
    }
    std::uint16_t bin_at(int c, int i, int j, int d) const {
        return rpe_bins.at(c)[(static_cast<std::size_t>(i) * n + j) * dims + d];
    }

    /// Checks the structural invariants; throws CorruptLabels on violation.
    void validate() const;
};

/// Builds OCE / RPE / RPE-bin targets from normalized boxes and a normalized
/// depth map. dims selects 2D (box midpoints) or 3D (midpoints + mean depth).
SRLabels build_labels(const std::string& scene_id, const std::vector<geom::BBox>& boxes,
                      const geom::DepthMap& map, int dims, const std::vector<int>& bin_counts,
                      std::vector<std::string> object_ids = {});

// Label container: magic "SRLB", u16 version, u32 header length, JSON header,
// then raw little-endian tensors in header order.
void write_labels(const SRLabels& labels, const std::filesystem::path& path);
SRLabels read_labels(const std::filesystem::path& path);

/// Global maximum over the raw depth values of every listed file; the single
/// normalizer for a dataset. Throws NoData on an empty list.
double dataset_depth_max(const std::vector<std::filesystem::path>& depth_files);

}  // namespace sws::labels
