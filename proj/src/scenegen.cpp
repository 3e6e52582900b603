#include "sws/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "sws/errors.hpp"
#include "sws/io.hpp"
#include "sws/rng.hpp"

namespace sws::scene {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr const char* kShapeNames[] = {"cube", "sphere", "cylinder"};
constexpr const char* kColorNames[] = {"red", "green", "blue", "yellow", "purple", "orange"};
constexpr const char* kRelationNames[] = {"left", "right", "front", "behind", "above", "below", "none"};

// Spatial questions are kept only when the weak-supervision delta clears this
// margin; it sits far above the C=3 center bin (1e-6) and f32 rounding, so a
// label-vs-answer audit can never see a contradictory sign.
constexpr double kWeakDeltaMargin = 1e-3;

constexpr int kMaxPlacementAttempts = 20000;

template <typename T, std::size_t N>
int index_of(const T (&names)[N], const std::string& s) {
    for (std::size_t i = 0; i < N; ++i)
        if (s == names[i]) return static_cast<int>(i);
    return -1;
}

void shuffle_indices(std::vector<int>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[rng.uniform_int(i)]);
}

}  // namespace

std::string to_string(Shape s) { return kShapeNames[static_cast<int>(s)]; }
std::string to_string(Color c) { return kColorNames[static_cast<int>(c)]; }
std::string to_string(Relation r) { return kRelationNames[static_cast<int>(r)]; }

Shape shape_from_string(const std::string& s) {
    int i = index_of(kShapeNames, s);
    if (i < 0) throw InvalidSpec("unknown shape: " + s);
    return static_cast<Shape>(i);
}

Color color_from_string(const std::string& s) {
    int i = index_of(kColorNames, s);
    if (i < 0) throw InvalidSpec("unknown color: " + s);
    return static_cast<Color>(i);
}

Relation relation_from_string(const std::string& s) {
    int i = index_of(kRelationNames, s);
    if (i < 0) throw InvalidSpec("unknown relation: " + s);
    return static_cast<Relation>(i);
}

Axis relation_axis(Relation r) {
    switch (r) {
        case Relation::left:
        case Relation::right: return Axis::x;
        case Relation::above:
        case Relation::below: return Axis::y;
        case Relation::front:
        case Relation::behind: return Axis::z;
        default: throw InvalidSpec("relation 'none' has no axis");
    }
}

int relation_sign(Relation r) {
    switch (r) {
        case Relation::left:
        case Relation::above:
        case Relation::front: return -1;
        case Relation::right:
        case Relation::below:
        case Relation::behind: return 1;
        default: throw InvalidSpec("relation 'none' has no sign");
    }
}

const SceneObject& Scene::object(const std::string& id) const {
    int i = object_index(id);
    if (i < 0) throw InvalidSpec("unknown object id: " + id + " in scene " + scene_id);
    return objects[static_cast<std::size_t>(i)];
}

int Scene::object_index(const std::string& id) const {
    for (std::size_t i = 0; i < objects.size(); ++i)
        if (objects[i].object_id == id) return static_cast<int>(i);
    return -1;
}

// ---------------------------------------------------------------------------
// Scene generation

Scene generate_scene(std::uint64_t seed, const SceneSpec& spec) {
    if (spec.n_objects < 1) throw InvalidSpec("n_objects must be at least 1");
    if (!(spec.x_max > spec.x_min) || !(spec.y_max > spec.y_min) || !(spec.z_max > spec.z_min))
        throw InvalidSpec("scene bounds must have positive volume");
    if (!(spec.size_min > 0.0) || spec.size_max < spec.size_min)
        throw InvalidSpec("object size range is invalid");
    if (!(spec.z_min > 0.0)) throw InvalidSpec("object centers must be in front of the camera");
    if (spec.n_objects > kNumColors * kNumShapes)
        throw InvalidSpec("n_objects exceeds the number of distinct (color, shape) pairs");
    if (!(spec.room_depth_m > spec.z_max))
        throw InvalidSpec("room depth must lie behind the object volume");

    Rng rng(seed);

    // Distinct (color, shape) pairs make referring expressions unambiguous.
    std::vector<int> combos(static_cast<std::size_t>(kNumColors * kNumShapes));
    for (std::size_t i = 0; i < combos.size(); ++i) combos[i] = static_cast<int>(i);
    shuffle_indices(combos, rng);

    Scene scene;
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "s%016llx", static_cast<unsigned long long>(seed));
    scene.scene_id = idbuf;
    scene.camera = spec.camera;
    scene.room_depth_m = spec.room_depth_m;

    std::vector<PixelBox> placed_boxes;
    for (int n = 0; n < spec.n_objects; ++n) {
        SceneObject obj;
        obj.object_id = "o" + std::to_string(n);
        obj.color = static_cast<Color>(combos[static_cast<std::size_t>(n)] / kNumShapes);
        obj.shape = static_cast<Shape>(combos[static_cast<std::size_t>(n)] % kNumShapes);

        bool placed = false;
        for (int attempt = 0; attempt < kMaxPlacementAttempts && !placed; ++attempt) {
            obj.center_m = {rng.uniform(spec.x_min, spec.x_max), rng.uniform(spec.y_min, spec.y_max),
                            rng.uniform(spec.z_min, spec.z_max)};
            obj.size_m = rng.uniform(spec.size_min, spec.size_max);

            bool ok = obj.center_m[2] - obj.size_m / 2.0 > 0.0;
            for (const auto& other : scene.objects) {
                double sep = 0.0;
                for (int a = 0; a < 3; ++a)
                    sep = std::max(sep, std::abs(obj.center_m[static_cast<std::size_t>(a)] -
                                                 other.center_m[static_cast<std::size_t>(a)]));
                if (sep < spec.min_separation_m) ok = false;
            }
            if (ok) {
                try {
                    const PixelBox box = project_bbox(obj, spec.camera);
                    for (const auto& other : placed_boxes) {
                        const double ix = std::max(0.0, std::min(box.x2, other.x2) -
                                                            std::max(box.x1, other.x1));
                        const double iy = std::max(0.0, std::min(box.y2, other.y2) -
                                                            std::max(box.y1, other.y1));
                        const double min_area = std::min((box.x2 - box.x1) * (box.y2 - box.y1),
                                                         (other.x2 - other.x1) * (other.y2 - other.y1));
                        if (ix * iy > spec.max_box_overlap * min_area) ok = false;
                    }
                    if (ok) placed_boxes.push_back(box);
                } catch (const ProjectionError&) {
                    ok = false;
                }
            }
            placed = ok;
        }
        if (!placed)
            throw InvalidSpec("cannot place " + std::to_string(spec.n_objects) +
                              " objects with the requested separation inside the bounds");
        scene.objects.push_back(obj);
    }
    return scene;
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

struct Aabb {
    double lo[3], hi[3];
};

Aabb object_aabb(const SceneObject& o) {
    const double h = o.size_m / 2.0;
    Aabb b;
    for (int a = 0; a < 3; ++a) {
        b.lo[a] = o.center_m[static_cast<std::size_t>(a)] - h;
        b.hi[a] = o.center_m[static_cast<std::size_t>(a)] + h;
    }
    return b;
}

// Entry depth of the view ray through (dx, dy, 1) into the box, or a negative
// value when the ray misses. The ray parameter equals scene depth z.
double ray_entry_depth(double dx, double dy, const Aabb& b) {
    double t_lo = b.lo[2];
    double t_hi = b.hi[2];
    const double dir[2] = {dx, dy};
    for (int a = 0; a < 2; ++a) {
        if (std::abs(dir[a]) < 1e-12) {
            if (b.lo[a] > 0.0 || b.hi[a] < 0.0) return -1.0;
            continue;
        }
        double t0 = b.lo[a] / dir[a];
        double t1 = b.hi[a] / dir[a];
        if (t0 > t1) std::swap(t0, t1);
        t_lo = std::max(t_lo, t0);
        t_hi = std::min(t_hi, t1);
    }
    if (t_lo > t_hi || t_hi <= 0.0) return -1.0;
    return t_lo;
}

template <typename PixelFn>
void rasterize(const Scene& scene, PixelFn&& fn) {
    const Camera& cam = scene.camera;
    std::vector<Aabb> boxes;
    boxes.reserve(scene.objects.size());
    for (const auto& o : scene.objects) boxes.push_back(object_aabb(o));

    for (int i = 0; i < cam.height_px; ++i) {
        const double dy = (i + 0.5 - cam.principal_y) / cam.focal_px;
        for (int j = 0; j < cam.width_px; ++j) {
            const double dx = (j + 0.5 - cam.principal_x) / cam.focal_px;
            double best = scene.room_depth_m;
            int winner = -1;
            for (std::size_t n = 0; n < boxes.size(); ++n) {
                const double t = ray_entry_depth(dx, dy, boxes[n]);
                if (t > 0.0 && t < best) {
                    best = t;
                    winner = static_cast<int>(n);
                }
            }
            fn(i, j, best, winner);
        }
    }
}

}  // namespace

geom::DepthMap render_depth(const Scene& scene) {
    geom::DepthMap map;
    map.height = scene.camera.height_px;
    map.width = scene.camera.width_px;
    map.values.assign(static_cast<std::size_t>(map.height) * map.width, 0.0f);
    rasterize(scene, [&](int i, int j, double depth, int) {
        map.at(i, j) = static_cast<float>(depth);
    });
    return map;
}

Image render_appearance(const Scene& scene) {
    Image img;
    img.height = scene.camera.height_px;
    img.width = scene.camera.width_px;
    img.channels = 3;
    img.data.assign(static_cast<std::size_t>(img.height) * img.width * 3, 0.0f);
    rasterize(scene, [&](int i, int j, double, int winner) {
        if (winner < 0) return;
        const auto& o = scene.objects[static_cast<std::size_t>(winner)];
        img.at(i, j, 0) = static_cast<float>(static_cast<int>(o.color) + 1) / kNumColors;
        img.at(i, j, 1) = static_cast<float>(static_cast<int>(o.shape) + 1) / kNumShapes;
        img.at(i, j, 2) = 1.0f;
    });
    return img;
}

PixelBox project_bbox(const SceneObject& obj, const Camera& cam) {
    const Aabb b = object_aabb(obj);
    if (b.lo[2] <= 0.0) throw ProjectionError("object volume reaches the camera plane");

    double u_min = 1e30, u_max = -1e30, v_min = 1e30, v_max = -1e30;
    for (int corner = 0; corner < 8; ++corner) {
        const double x = (corner & 1) ? b.hi[0] : b.lo[0];
        const double y = (corner & 2) ? b.hi[1] : b.lo[1];
        const double z = (corner & 4) ? b.hi[2] : b.lo[2];
        const double u = cam.focal_px * x / z + cam.principal_x;
        const double v = cam.focal_px * y / z + cam.principal_y;
        u_min = std::min(u_min, u);
        u_max = std::max(u_max, u);
        v_min = std::min(v_min, v);
        v_max = std::max(v_max, v);
    }
    PixelBox box{std::clamp(u_min, 0.0, static_cast<double>(cam.width_px)),
                 std::clamp(v_min, 0.0, static_cast<double>(cam.height_px)),
                 std::clamp(u_max, 0.0, static_cast<double>(cam.width_px)),
                 std::clamp(v_max, 0.0, static_cast<double>(cam.height_px))};
    if (!(box.x2 > box.x1) || !(box.y2 > box.y1))
        throw ProjectionError("object projects outside the image");
    return box;
}

geom::BBox normalized_bbox(const SceneObject& obj, const Camera& cam) {
    const PixelBox b = project_bbox(obj, cam);
    return geom::BBox(b.x1 / cam.width_px, b.y1 / cam.height_px, b.x2 / cam.width_px,
                      b.y2 / cam.height_px);
}

Relation oracle_relation(const Scene& scene, const std::string& a, const std::string& b,
                         Axis axis, double eps_tie_m) {
    const auto& oa = scene.object(a);
    const auto& ob = scene.object(b);
    const int ax = static_cast<int>(axis);
    const double diff = oa.center_m[static_cast<std::size_t>(ax)] - ob.center_m[static_cast<std::size_t>(ax)];
    if (std::abs(diff) < eps_tie_m)
        throw AmbiguousRelation("centers tie on the requested axis within eps");
    switch (axis) {
        case Axis::x: return diff < 0 ? Relation::left : Relation::right;
        case Axis::y: return diff < 0 ? Relation::above : Relation::below;
        case Axis::z: return diff < 0 ? Relation::front : Relation::behind;
    }
    throw InvalidSpec("bad axis");
}

// ---------------------------------------------------------------------------
// Question generation

namespace {

std::string descriptor(const SceneObject& o) {
    return to_string(o.color) + " " + to_string(o.shape);
}

std::string spatial_text(const Scene& scene, int i, int j, Axis axis) {
    const std::string a = descriptor(scene.objects[static_cast<std::size_t>(i)]);
    const std::string b = descriptor(scene.objects[static_cast<std::size_t>(j)]);
    switch (axis) {
        case Axis::x: return "is the " + a + " to the left or to the right of the " + b;
        case Axis::y: return "is the " + a + " above or below the " + b;
        case Axis::z: return "is the " + a + " in front of the " + b + " or behind it";
    }
    throw InvalidSpec("bad axis");
}

struct SpatialCandidate {
    int subject, object;
    Axis axis;
    Relation relation;
};

}  // namespace

std::vector<QAItem> generate_questions(const Scene& scene, std::uint64_t seed, int k,
                                       const QaOptions& opts, const geom::DepthMap* depth) {
    if (k < 1) throw InvalidSpec("question count must be at least 1");
    const int n_nonspatial = static_cast<int>(std::llround(opts.ratio_nonspatial * k));
    const int n_spatial = k - n_nonspatial;
    const int n_obj = static_cast<int>(scene.objects.size());

    Rng rng(seed);

    // Enumerate defensible spatial candidates: unambiguous 3D relation whose
    // weak-supervision delta agrees in sign and clears the margin.
    std::vector<SpatialCandidate> candidates;
    if (n_spatial > 0) {
        geom::DepthMap local;
        if (!depth) {
            local = render_depth(scene);
            depth = &local;
        }
        const geom::DepthMap norm = geom::normalize_depth(*depth, opts.depth_global_max);
        std::vector<geom::Centroid> centroids;
        centroids.reserve(static_cast<std::size_t>(n_obj));
        for (const auto& o : scene.objects)
            centroids.push_back(geom::centroid_3d(normalized_bbox(o, scene.camera), norm));

        for (int i = 0; i < n_obj; ++i) {
            for (int j = 0; j < n_obj; ++j) {
                if (i == j) continue;
                for (Axis axis : {Axis::x, Axis::y, Axis::z}) {
                    Relation rel;
                    try {
                        rel = oracle_relation(scene, scene.objects[static_cast<std::size_t>(i)].object_id,
                                              scene.objects[static_cast<std::size_t>(j)].object_id, axis,
                                              opts.eps_tie_m);
                    } catch (const AmbiguousRelation&) {
                        continue;
                    }
                    const int d = static_cast<int>(axis);
                    const double weak = centroids[static_cast<std::size_t>(i)][d] -
                                        centroids[static_cast<std::size_t>(j)][d];
                    if (std::abs(weak) < kWeakDeltaMargin) continue;
                    if ((weak < 0 ? -1 : 1) != relation_sign(rel)) continue;
                    candidates.push_back({i, j, axis, rel});
                }
            }
        }
        if (candidates.empty())
            throw TemplateUnsatisfiable("scene admits no unambiguous spatial question");
    }

    std::vector<QAItem> items;
    items.reserve(static_cast<std::size_t>(k));

    if (n_spatial > 0) {
        std::vector<int> order(candidates.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        shuffle_indices(order, rng);
        for (int q = 0; q < n_spatial; ++q) {
            const auto& c = candidates[static_cast<std::size_t>(order[static_cast<std::size_t>(q) % order.size()])];
            QAItem item;
            item.scene_id = scene.scene_id;
            item.text = spatial_text(scene, c.subject, c.object, c.axis);
            item.answer = to_string(c.relation);
            item.relation = c.relation;
            item.subject_id = scene.objects[static_cast<std::size_t>(c.subject)].object_id;
            item.object_id = scene.objects[static_cast<std::size_t>(c.object)].object_id;
            item.is_spatial = true;
            items.push_back(std::move(item));
        }
    }

    // Attribute questions: open ones need a unique referent, existence is
    // always well-posed.
    std::vector<Shape> unique_shapes;
    std::vector<Color> unique_colors;
    {
        std::map<int, int> shape_count, color_count;
        for (const auto& o : scene.objects) {
            shape_count[static_cast<int>(o.shape)]++;
            color_count[static_cast<int>(o.color)]++;
        }
        for (auto [s, cnt] : shape_count)
            if (cnt == 1) unique_shapes.push_back(static_cast<Shape>(s));
        for (auto [c, cnt] : color_count)
            if (cnt == 1) unique_colors.push_back(static_cast<Color>(c));
    }

    for (int q = 0; q < n_nonspatial; ++q) {
        const int n_types = 1 + (unique_shapes.empty() ? 0 : 1) + (unique_colors.empty() ? 0 : 1);
        int type = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n_types)));
        if (type == 1 && unique_shapes.empty()) type = 0;
        if (type == 2 && unique_colors.empty()) type = 0;

        QAItem item;
        item.scene_id = scene.scene_id;
        item.is_spatial = false;
        item.relation = Relation::none;
        if (type == 1) {
            const Shape s = unique_shapes[rng.uniform_int(unique_shapes.size())];
            for (const auto& o : scene.objects)
                if (o.shape == s) item.answer = to_string(o.color);
            item.text = "what color is the " + to_string(s);
        } else if (type == 2) {
            const Color c = unique_colors[rng.uniform_int(unique_colors.size())];
            for (const auto& o : scene.objects)
                if (o.color == c) item.answer = to_string(o.shape);
            item.text = "what shape is the " + to_string(c) + " object";
        } else {
            const Color c = static_cast<Color>(rng.uniform_int(kNumColors));
            const Shape s = static_cast<Shape>(rng.uniform_int(kNumShapes));
            bool present = false;
            for (const auto& o : scene.objects)
                if (o.color == c && o.shape == s) present = true;
            item.text = "is there a " + to_string(c) + " " + to_string(s) + " in the scene";
            item.answer = present ? "yes" : "no";
        }
        items.push_back(std::move(item));
    }

    // Interleave spatial and attribute questions, then assign stable ids.
    std::vector<int> order(items.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    shuffle_indices(order, rng);
    std::vector<QAItem> out;
    out.reserve(items.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        QAItem item = std::move(items[static_cast<std::size_t>(order[i])]);
        char qid[32];
        std::snprintf(qid, sizeof(qid), "-q%03zu", i);
        item.question_id = scene.scene_id + qid;
        out.push_back(std::move(item));
    }
    return out;
}

std::string QAItem::template_key() const {
    if (is_spatial) {
        switch (relation_axis(relation)) {
            case Axis::x: return "axis_x";
            case Axis::y: return "axis_y";
            case Axis::z: return "axis_z";
        }
    }
    if (text.rfind("what color", 0) == 0) return "color_q";
    if (text.rfind("what shape", 0) == 0) return "shape_q";
    return "exist_q";
}

// ---------------------------------------------------------------------------
// Splits

SplitSet make_splits(const std::vector<QAItem>& dataset, std::uint64_t seed, double ood_shift) {
    if (dataset.empty()) throw NoData("cannot split an empty dataset");
    if (!(ood_shift >= 0.0 && ood_shift < 1.0)) throw InvalidSpec("ood_shift must lie in [0, 1)");

    Rng rng(seed);
    std::vector<int> order(dataset.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    shuffle_indices(order, rng);

    const std::size_t n = dataset.size();
    const std::size_t n_train = static_cast<std::size_t>(std::llround(0.7 * static_cast<double>(n)));
    const std::size_t n_dev = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n)));

    SplitSet splits;
    std::vector<int> pool;
    for (std::size_t i = 0; i < n; ++i) {
        const QAItem& item = dataset[static_cast<std::size_t>(order[i])];
        if (i < n_train) splits.train.push_back(item.question_id);
        else if (i < n_train + n_dev) splits.dev.push_back(item.question_id);
        else pool.push_back(order[i]);
    }
    // Half of the held-out pool is the i.i.d. test set; the answer-shifted
    // OOD set is resampled from the other half so all four stay disjoint.
    const std::size_t n_iid = (pool.size() + 1) / 2;
    std::vector<int> ood_pool;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (i < n_iid) splits.test_iid.push_back(dataset[static_cast<std::size_t>(pool[i])].question_id);
        else ood_pool.push_back(pool[i]);
    }

    // Training answer histogram per template.
    std::map<std::string, std::map<std::string, double>> train_hist;
    {
        std::set<std::string> train_ids(splits.train.begin(), splits.train.end());
        for (const auto& item : dataset)
            if (train_ids.count(item.question_id)) train_hist[item.template_key()][item.answer] += 1.0;
    }

    // Group the OOD pool by (template, answer), deterministically shuffled.
    std::map<std::string, std::map<std::string, std::vector<int>>> groups;
    for (int idx : ood_pool)
        groups[dataset[static_cast<std::size_t>(idx)].template_key()]
              [dataset[static_cast<std::size_t>(idx)].answer].push_back(idx);

    std::vector<int> chosen;
    for (auto& [tmpl, by_answer] : groups) {
        const auto hist_it = train_hist.find(tmpl);
        std::map<std::string, double> target;
        double total = 0.0;
        if (hist_it != train_hist.end())
            for (const auto& [ans, cnt] : hist_it->second) total += cnt;
        if (total > 0.0) {
            std::string majority;
            double best = -1.0;
            for (const auto& [ans, cnt] : hist_it->second)
                if (cnt > best) { best = cnt; majority = ans; }
            const double p_major = best / total;
            if (p_major >= 1.0 - 1e-12) {
                for (const auto& [ans, cnt] : hist_it->second) target[ans] = cnt / total;
            } else {
                const double p_major_new = p_major * (1.0 - ood_shift);
                const double renorm = (1.0 - p_major_new) / (1.0 - p_major);
                for (const auto& [ans, cnt] : hist_it->second)
                    target[ans] = (ans == majority) ? p_major_new : (cnt / total) * renorm;
            }
        } else {
            // Template unseen in training: keep the pool distribution.
            double pool_total = 0.0;
            for (const auto& [ans, ids] : by_answer) pool_total += static_cast<double>(ids.size());
            for (const auto& [ans, ids] : by_answer)
                target[ans] = static_cast<double>(ids.size()) / pool_total;
        }

        double scale = 1e30;
        for (const auto& [ans, p] : target) {
            if (p <= 0.0) continue;
            const auto it = by_answer.find(ans);
            const double avail = it == by_answer.end() ? 0.0 : static_cast<double>(it->second.size());
            scale = std::min(scale, avail / p);
        }
        if (scale >= 1e30) scale = 0.0;

        for (auto& [ans, ids] : by_answer) {
            const auto t = target.find(ans);
            if (t == target.end() || t->second <= 0.0) continue;
            shuffle_indices(ids, rng);
            const auto take = static_cast<std::size_t>(std::floor(t->second * scale + 1e-9));
            for (std::size_t i = 0; i < take && i < ids.size(); ++i) chosen.push_back(ids[i]);
        }
    }
    std::sort(chosen.begin(), chosen.end());
    for (int idx : chosen) splits.test_ood.push_back(dataset[static_cast<std::size_t>(idx)].question_id);
    return splits;
}

// ---------------------------------------------------------------------------
// Serialization

std::string Scene::to_json() const {
    ordered_json j;
    j["scene_id"] = scene_id;
    j["room_depth_m"] = room_depth_m;
    j["camera"] = {{"focal_px", camera.focal_px},
                   {"width_px", camera.width_px},
                   {"height_px", camera.height_px},
                   {"principal", {camera.principal_x, camera.principal_y}}};
    j["objects"] = ordered_json::array();
    for (const auto& o : objects) {
        ordered_json jo;
        jo["object_id"] = o.object_id;
        jo["shape"] = scene::to_string(o.shape);
        jo["color"] = scene::to_string(o.color);
        jo["center_m"] = {o.center_m[0], o.center_m[1], o.center_m[2]};
        jo["size_m"] = o.size_m;
        j["objects"].push_back(jo);
    }
    return j.dump();
}

Scene Scene::from_json(const std::string& s) {
    const auto j = json::parse(s);
    Scene scene;
    scene.scene_id = j.at("scene_id").get<std::string>();
    scene.room_depth_m = j.at("room_depth_m").get<double>();
    const auto& jc = j.at("camera");
    scene.camera.focal_px = jc.at("focal_px").get<double>();
    scene.camera.width_px = jc.at("width_px").get<int>();
    scene.camera.height_px = jc.at("height_px").get<int>();
    scene.camera.principal_x = jc.at("principal").at(0).get<double>();
    scene.camera.principal_y = jc.at("principal").at(1).get<double>();
    for (const auto& jo : j.at("objects")) {
        SceneObject o;
        o.object_id = jo.at("object_id").get<std::string>();
        o.shape = shape_from_string(jo.at("shape").get<std::string>());
        o.color = color_from_string(jo.at("color").get<std::string>());
        o.center_m = {jo.at("center_m").at(0).get<double>(), jo.at("center_m").at(1).get<double>(),
                      jo.at("center_m").at(2).get<double>()};
        o.size_m = jo.at("size_m").get<double>();
        scene.objects.push_back(std::move(o));
    }
    return scene;
}

std::string QAItem::to_json_line() const {
    ordered_json j;
    j["question_id"] = question_id;
    j["scene_id"] = scene_id;
    j["text"] = text;
    j["answer"] = answer;
    j["relation"] = scene::to_string(relation);
    if (is_spatial) {
        j["subject_id"] = subject_id;
        j["object_id"] = object_id;
    }
    j["is_spatial"] = is_spatial;
    return j.dump();
}

QAItem QAItem::from_json_line(const std::string& line) {
    const auto j = json::parse(line);
    QAItem item;
    item.question_id = j.at("question_id").get<std::string>();
    item.scene_id = j.at("scene_id").get<std::string>();
    item.text = j.at("text").get<std::string>();
    item.answer = j.at("answer").get<std::string>();
    item.relation = relation_from_string(j.at("relation").get<std::string>());
    item.is_spatial = j.at("is_spatial").get<bool>();
    if (item.is_spatial) {
        item.subject_id = j.at("subject_id").get<std::string>();
        item.object_id = j.at("object_id").get<std::string>();
        if (item.relation == Relation::none)
            throw CorruptLabels("spatial question without a relation: " + item.question_id);
    }
    return item;
}

std::string SplitSet::to_json() const {
    ordered_json j;
    j["train"] = train;
    j["dev"] = dev;
    j["test_iid"] = test_iid;
    j["test_ood"] = test_ood;
    return j.dump();
}

SplitSet SplitSet::from_json(const std::string& s) {
    const auto j = json::parse(s);
    SplitSet sp;
    sp.train = j.at("train").get<std::vector<std::string>>();
    sp.dev = j.at("dev").get<std::vector<std::string>>();
    sp.test_iid = j.at("test_iid").get<std::vector<std::string>>();
    sp.test_ood = j.at("test_ood").get<std::vector<std::string>>();
    return sp;
}

void write_depth(const geom::DepthMap& map, const std::filesystem::path& path) {
    io::Writer w;
    w.str("DPTH");
    w.u32(static_cast<std::uint32_t>(map.height));
    w.u32(static_cast<std::uint32_t>(map.width));
    for (float v : map.values) w.f32(v);
    io::write_file(path, w.data());
}

geom::DepthMap read_depth(const std::filesystem::path& path) {
    const auto buf = io::read_file(path);
    io::Reader r(buf);
    if (r.remaining() < 12 || r.str(4) != "DPTH") throw IoError("not a depth file: " + path.string());
    geom::DepthMap map;
    map.height = static_cast<int>(r.u32());
    map.width = static_cast<int>(r.u32());
    const std::size_t count = static_cast<std::size_t>(map.height) * static_cast<std::size_t>(map.width);
    if (r.remaining() != count * 4) throw IoError("depth file size mismatch: " + path.string());
    map.values.resize(count);
    for (float& v : map.values) v = r.f32();
    return map;
}

std::vector<std::string> answer_vocabulary() {
    std::vector<std::string> vocab;
    for (const char* s : kColorNames) vocab.emplace_back(s);
    for (const char* s : kShapeNames) vocab.emplace_back(s);
    for (int r = 0; r < 6; ++r) vocab.push_back(to_string(static_cast<Relation>(r)));
    vocab.emplace_back("yes");
    vocab.emplace_back("no");
    std::sort(vocab.begin(), vocab.end());
    return vocab;
}

}  // namespace sws::scene
