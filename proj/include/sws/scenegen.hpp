#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sws/geometry.hpp"

namespace sws::scene {

enum class Shape { cube, sphere, cylinder };
enum class Color { red, green, blue, yellow, purple, orange };
enum class Axis { x, y, z };
enum class Relation { left, right, front, behind, above, below, none };

constexpr int kNumShapes = 3;
constexpr int kNumColors = 6;

std::string to_string(Shape s);
std::string to_string(Color c);
std::string to_string(Relation r);
Shape shape_from_string(const std::string& s);
Color color_from_string(const std::string& s);
Relation relation_from_string(const std::string& s);

/// Axis a relation word compares on, e.g. left/right -> x.
Axis relation_axis(Relation r);
/// Sign of (center_a - center_b) on the relation's axis implied by the word:
/// left/above/front are negative, right/below/behind positive.
int relation_sign(Relation r);

/// Pinhole camera. Image axes follow pixel coordinates: x right (columns),
/// y down (rows); the camera frame shares them, z pointing into the scene.
struct Camera {
    double focal_px = 64.0;
    int width_px = 64;
    int height_px = 64;
    double principal_x = 32.0;
    double principal_y = 32.0;
};

struct SceneObject {
    std::string object_id;
    Shape shape = Shape::cube;
    Color color = Color::red;
    std::array<double, 3> center_m{0.0, 0.0, 2.0};  // camera frame, meters
    double size_m = 0.3;
};

struct Scene {
    std::string scene_id;
    std::vector<SceneObject> objects;
    Camera camera;
    double room_depth_m = 6.0;

    const SceneObject& object(const std::string& id) const;
    int object_index(const std::string& id) const;

    std::string to_json() const;
    static Scene from_json(const std::string& s);
};

struct QAItem {
    std::string question_id;
    std::string scene_id;
    std::string text;
    std::string answer;
    Relation relation = Relation::none;
    std::string subject_id;  // empty when not spatial
    std::string object_id;
    bool is_spatial = false;

    /// Template family key (derived, not stored): axis_x / axis_y / axis_z
    /// for spatial items, color_q / shape_q / exist_q otherwise.
    std::string template_key() const;

    std::string to_json_line() const;
    static QAItem from_json_line(const std::string& line);
};

/// Generation parameters. Bounds are a camera-frame box the object centers
/// are drawn from; they must keep every object inside the view frustum.
struct SceneSpec {
    int n_objects = 5;
    double x_min = -0.65, x_max = 0.65;
    double y_min = -0.45, y_max = 0.45;
    double z_min = 2.0, z_max = 4.5;
    double size_min = 0.2, size_max = 0.4;
    double min_separation_m = 0.3;  // required on at least one axis per pair
    /// Cap on projected-box overlap (intersection over the smaller box).
    /// Heavy occlusion poisons box-mean depth labels; 1.0 disables the cap.
    double max_box_overlap = 0.25;
    double room_depth_m = 6.0;
    Camera camera;
};

struct QaOptions {
    double ratio_nonspatial = 0.3;
    double eps_tie_m = 0.05;
    /// Dataset-wide depth normalizer used to place the weak-label abstain
    /// band. With a uniform room depth the background makes every map's
    /// maximum equal to it, so the default is exact for generated datasets.
    double depth_global_max = 6.0;
};

/// Non-depth render of the scene: 3 channels per pixel (color id, shape id,
/// occupancy), row-major HWC. Feeds the patch pyramid.
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> data;

    float at(int row, int col, int ch) const {
        return data[(static_cast<std::size_t>(row) * width + col) * channels + ch];
    }
    float& at(int row, int col, int ch) {
        return data[(static_cast<std::size_t>(row) * width + col) * channels + ch];
    }
};

/// Box in pixel units, corners clamped to the image.
struct PixelBox {
    double x1, y1, x2, y2;
};

/// Deterministic scene draw; object (color, shape) pairs are distinct so
/// every object has an unambiguous referring expression.
Scene generate_scene(std::uint64_t seed, const SceneSpec& spec);

/// Analytic z-buffer over axis-aligned bounding volumes: each pixel holds the
/// depth of the nearest surface its view ray enters, else room_depth_m.
geom::DepthMap render_depth(const Scene& scene);

/// Appearance render for patch features (no depth channel).
Image render_appearance(const Scene& scene);

/// Tight pixel box around the pinhole projection of the object's bounding
/// volume, clamped to the image. Throws ProjectionError if any part of the
/// volume is at or behind the camera plane.
PixelBox project_bbox(const SceneObject& obj, const Camera& cam);

/// project_bbox normalized to unit coordinates.
geom::BBox normalized_bbox(const SceneObject& obj, const Camera& cam);

/// Ground-truth relation of a vs. b on an axis from their 3D centers.
/// Differences smaller than eps_tie_m are refused as ambiguous.
Relation oracle_relation(const Scene& scene, const std::string& a, const std::string& b,
                         Axis axis, double eps_tie_m = 0.05);

/// Template questions with oracle answers. Spatial questions are only asked
/// about (pair, axis) candidates whose weak-supervision delta agrees in sign
/// with the 3D relation and clears every supported bin spec's center bin, so
/// label-vs-answer audits are consistent by construction.
/// `depth` optionally reuses a pre-rendered map for this scene.
std::vector<QAItem> generate_questions(const Scene& scene, std::uint64_t seed, int k,
                                       const QaOptions& opts = {},
                                       const geom::DepthMap* depth = nullptr);

struct SplitSet {
    std::vector<std::string> train;
    std::vector<std::string> dev;
    std::vector<std::string> test_iid;
    std::vector<std::string> test_ood;

    std::string to_json() const;
    static SplitSet from_json(const std::string& s);
};

/// Disjoint train/dev/test splits plus an answer-shifted OOD test set: per
/// question template, the training-majority answer's share is scaled by
/// (1 - ood_shift) and the remainder renormalized over the other answers.
SplitSet make_splits(const std::vector<QAItem>& dataset, std::uint64_t seed, double ood_shift);

// Depth file serialization: "DPTH", u32 height, u32 width, row-major
// little-endian f32 meters.
void write_depth(const geom::DepthMap& map, const std::filesystem::path& path);
geom::DepthMap read_depth(const std::filesystem::path& path);

/// All answer strings a generated dataset can contain, sorted.
std::vector<std::string> answer_vocabulary();

}  // namespace sws::scene
