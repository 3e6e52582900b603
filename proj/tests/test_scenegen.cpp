#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "sws/errors.hpp"
#include "sws/scenegen.hpp"

using namespace sws;
using namespace sws::scene;

namespace {

Scene single_object_scene(double z, double size, double x = 0.0, double y = 0.0) {
    Scene s;
    s.scene_id = "test";
    s.room_depth_m = 5.0;
    s.camera = Camera{};
    SceneObject o;
    o.object_id = "o0";
    o.center_m = {x, y, z};
    o.size_m = size;
    s.objects = {o};
    return s;
}

}  // namespace

TEST_CASE("generate_scene is deterministic and respects its spec") {
    SceneSpec spec;
    spec.n_objects = 5;
    const Scene a = generate_scene(42, spec);
    const Scene b = generate_scene(42, spec);
    CHECK(a.to_json() == b.to_json());  // bit-identical
    CHECK(a.objects.size() == 5);

    const Scene c = generate_scene(43, spec);
    CHECK(a.to_json() != c.to_json());

    for (const auto& o : a.objects) {
        CHECK(o.center_m[0] >= spec.x_min);
        CHECK(o.center_m[0] <= spec.x_max);
        CHECK(o.center_m[1] >= spec.y_min);
        CHECK(o.center_m[1] <= spec.y_max);
        CHECK(o.center_m[2] >= spec.z_min);
        CHECK(o.center_m[2] <= spec.z_max);
        CHECK(o.center_m[2] > 0.0);
        CHECK(o.size_m >= spec.size_min);
        CHECK(o.size_m <= spec.size_max);
    }

    // pairwise separation on at least one axis
    for (std::size_t i = 0; i < a.objects.size(); ++i)
        for (std::size_t j = i + 1; j < a.objects.size(); ++j) {
            double sep = 0.0;
            for (int ax = 0; ax < 3; ++ax)
                sep = std::max(sep, std::abs(a.objects[i].center_m[static_cast<std::size_t>(ax)] -
                                             a.objects[j].center_m[static_cast<std::size_t>(ax)]));
            CHECK(sep >= spec.min_separation_m);
        }

    // distinct descriptors
    std::set<std::pair<int, int>> combos;
    for (const auto& o : a.objects)
        combos.insert({static_cast<int>(o.color), static_cast<int>(o.shape)});
    CHECK(combos.size() == a.objects.size());

    SceneSpec bad = spec;
    bad.n_objects = 0;
    CHECK_THROWS_AS(generate_scene(42, bad), InvalidSpec);
    bad = spec;
    bad.x_max = bad.x_min;
    CHECK_THROWS_AS(generate_scene(42, bad), InvalidSpec);
}

TEST_CASE("scene JSON roundtrip") {
    SceneSpec spec;
    spec.n_objects = 4;
    const Scene a = generate_scene(7, spec);
    const Scene b = Scene::from_json(a.to_json());
    CHECK(a.to_json() == b.to_json());
}

TEST_CASE("render_depth: single cube against the room plane") {
    const Scene s = single_object_scene(2.2, 0.4);  // front face at 2.0
    const geom::DepthMap map = render_depth(s);
    REQUIRE(map.height == 64);
    REQUIRE(map.width == 64);

    // pixels whose rays pass through the front face see exactly its depth
    const double h = 0.2;
    int inside = 0, outside = 0;
    for (int i = 0; i < 64; ++i) {
        for (int j = 0; j < 64; ++j) {
            const double dx = (j + 0.5 - 32.0) / 64.0;
            const double dy = (i + 0.5 - 32.0) / 64.0;
            const double x_at_front = dx * 2.0;
            const double y_at_front = dy * 2.0;
            const bool front = std::abs(x_at_front) < h - 1e-9 && std::abs(y_at_front) < h - 1e-9;
            if (front) {
                CHECK(map.at(i, j) == doctest::Approx(2.0));
                ++inside;
            }
            if (map.at(i, j) == 5.0f) ++outside;
        }
    }
    CHECK(inside > 0);
    CHECK(outside > 0);

    // mean depth over the projected box tracks the front surface within 5%
    const PixelBox box = project_bbox(s.objects[0], s.camera);
    double sum = 0.0;
    int count = 0;
    for (int i = static_cast<int>(box.y1); i < static_cast<int>(box.y2); ++i)
        for (int j = static_cast<int>(box.x1); j < static_cast<int>(box.x2); ++j)
            if (map.at(i, j) < 5.0f) {
                sum += map.at(i, j);
                ++count;
            }
    REQUIRE(count > 0);
    CHECK(std::abs(sum / count - 2.0) / 2.0 < 0.05);
}

TEST_CASE("render_depth: mean depth near the front surface for every shape") {
    for (int shape = 0; shape < kNumShapes; ++shape) {
        Scene s = single_object_scene(3.0, 0.4, 0.3, -0.2);
        s.objects[0].shape = static_cast<Shape>(shape);
        const geom::DepthMap map = render_depth(s);
        const PixelBox box = project_bbox(s.objects[0], s.camera);
        double sum = 0.0;
        int count = 0;
        for (int i = static_cast<int>(box.y1); i < static_cast<int>(box.y2); ++i)
            for (int j = static_cast<int>(box.x1); j < static_cast<int>(box.x2); ++j)
                if (map.at(i, j) < static_cast<float>(s.room_depth_m)) {
                    sum += map.at(i, j);
                    ++count;
                }
        REQUIRE(count > 0);
        const double front = 3.0 - 0.2;
        CHECK(std::abs(sum / count - front) / front < 0.05);
    }
}

TEST_CASE("render_depth: nearest surface wins on overlap") {
    Scene s = single_object_scene(2.0, 0.5);
    SceneObject far = s.objects[0];
    far.object_id = "o1";
    far.center_m = {0.05, 0.05, 3.0};
    s.objects.push_back(far);
    const geom::DepthMap map = render_depth(s);
    // the image center is covered by both volumes; the near one wins
    CHECK(map.at(32, 32) == doctest::Approx(2.0 - 0.25));
}

TEST_CASE("project_bbox geometry") {
    SUBCASE("on-axis object is centered at the principal point") {
        const Scene s = single_object_scene(2.0, 0.3);
        const PixelBox b = project_bbox(s.objects[0], s.camera);
        CHECK((b.x1 + b.x2) / 2.0 == doctest::Approx(32.0));
        CHECK((b.y1 + b.y2) / 2.0 == doctest::Approx(32.0));
    }
    SUBCASE("side length scales as 1/z within 1% for small on-axis objects") {
        const double size = 0.02;
        for (double z : {1.0, 1.5, 2.0, 3.0}) {
            const PixelBox near = project_bbox(single_object_scene(z, size).objects[0], Camera{});
            const PixelBox half = project_bbox(single_object_scene(z / 2, size).objects[0], Camera{});
            const double ratio = (half.x2 - half.x1) / (near.x2 - near.x1);
            CHECK(ratio == doctest::Approx(2.0).epsilon(0.01));
            // absolute law: side * z is constant within 1%
            const double s1 = (near.x2 - near.x1) * z;
            const double s2 = (half.x2 - half.x1) * (z / 2);
            CHECK(s1 == doctest::Approx(s2).epsilon(0.01));
        }
    }
    SUBCASE("object behind the camera") {
        const Scene s = single_object_scene(-1.0, 0.3);
        CHECK_THROWS_AS(project_bbox(s.objects[0], s.camera), ProjectionError);
        const Scene touching = single_object_scene(0.1, 0.3);  // volume crosses z=0
        CHECK_THROWS_AS(project_bbox(touching.objects[0], touching.camera), ProjectionError);
    }
}

TEST_CASE("oracle_relation sign conventions") {
    Scene s;
    s.scene_id = "rel";
    s.camera = Camera{};
    s.room_depth_m = 6.0;
    SceneObject a, b;
    a.object_id = "a";
    a.center_m = {0.4, 0.1, 1.0};
    b.object_id = "b";
    b.center_m = {1.0, -0.2, 3.0};
    s.objects = {a, b};

    CHECK(oracle_relation(s, "a", "b", Axis::x) == Relation::left);
    CHECK(oracle_relation(s, "b", "a", Axis::x) == Relation::right);
    CHECK(oracle_relation(s, "a", "b", Axis::z) == Relation::front);
    CHECK(oracle_relation(s, "b", "a", Axis::z) == Relation::behind);
    CHECK(oracle_relation(s, "a", "b", Axis::y) == Relation::below);  // y grows downward
    CHECK(oracle_relation(s, "b", "a", Axis::y) == Relation::above);

    s.objects[1].center_m[0] = 0.4;  // exact tie on x
    CHECK_THROWS_AS(oracle_relation(s, "a", "b", Axis::x), AmbiguousRelation);
    s.objects[1].center_m[0] = 0.44;  // within the 0.05 m tie band
    CHECK_THROWS_AS(oracle_relation(s, "a", "b", Axis::x), AmbiguousRelation);
    CHECK_THROWS_AS(oracle_relation(s, "a", "missing", Axis::x), InvalidSpec);
}

TEST_CASE("generate_questions: determinism, soundness, ratio") {
    SceneSpec spec;
    spec.n_objects = 5;
    const Scene scene = generate_scene(9, spec);
    QaOptions opts;
    opts.depth_global_max = scene.room_depth_m;

    const auto qa1 = generate_questions(scene, 123, 10, opts);
    const auto qa2 = generate_questions(scene, 123, 10, opts);
    REQUIRE(qa1.size() == 10);
    for (std::size_t i = 0; i < qa1.size(); ++i)
        CHECK(qa1[i].to_json_line() == qa2[i].to_json_line());

    int nonspatial = 0;
    for (const auto& item : qa1) {
        if (!item.is_spatial) {
            ++nonspatial;
            CHECK(item.relation == Relation::none);
            continue;
        }
        // soundness: every spatial answer equals the oracle relation
        const Relation oracle = oracle_relation(scene, item.subject_id, item.object_id,
                                                relation_axis(item.relation));
        CHECK(to_string(oracle) == item.answer);
        CHECK(item.answer == to_string(item.relation));
    }
    CHECK(nonspatial == 3);  // 30% of 10

    // unique ids
    std::set<std::string> ids;
    for (const auto& item : qa1) ids.insert(item.question_id);
    CHECK(ids.size() == qa1.size());
}

TEST_CASE("generate_questions: single object cannot satisfy spatial-only templates") {
    const Scene s = single_object_scene(2.0, 0.3);
    QaOptions opts;
    opts.ratio_nonspatial = 0.0;
    opts.depth_global_max = s.room_depth_m;
    CHECK_THROWS_AS(generate_questions(s, 1, 4, opts), TemplateUnsatisfiable);

    // attribute-only questions still work
    opts.ratio_nonspatial = 1.0;
    const auto qa = generate_questions(s, 1, 4, opts);
    CHECK(qa.size() == 4);
    for (const auto& item : qa) CHECK_FALSE(item.is_spatial);
}

namespace {

std::vector<QAItem> build_dataset(int n_scenes, std::uint64_t seed, int per_scene = 8) {
    SceneSpec spec;
    spec.n_objects = 5;
    QaOptions opts;
    opts.depth_global_max = spec.room_depth_m;
    std::vector<QAItem> items;
    for (int i = 0; i < n_scenes; ++i) {
        const Scene s = generate_scene(seed + static_cast<std::uint64_t>(i) * 1000, spec);
        for (auto& q : generate_questions(s, seed + static_cast<std::uint64_t>(i), per_scene, opts))
            items.push_back(std::move(q));
    }
    return items;
}

std::map<std::string, std::map<std::string, int>> histogram(
    const std::vector<QAItem>& items, const std::set<std::string>& ids) {
    std::map<std::string, std::map<std::string, int>> h;
    for (const auto& item : items)
        if (ids.count(item.question_id)) h[item.template_key()][item.answer]++;
    return h;
}

}  // namespace

TEST_CASE("make_splits: disjoint, deterministic, answer-shifted") {
    const auto dataset = build_dataset(60, 500);
    const SplitSet sp = make_splits(dataset, 77, 0.5);
    const SplitSet sp2 = make_splits(dataset, 77, 0.5);
    CHECK(sp.to_json() == sp2.to_json());

    std::set<std::string> seen;
    std::size_t total = 0;
    for (const auto* split : {&sp.train, &sp.dev, &sp.test_iid, &sp.test_ood}) {
        for (const auto& id : *split) seen.insert(id);
        total += split->size();
    }
    CHECK(seen.size() == total);  // pairwise disjoint
    CHECK(sp.train.size() == static_cast<std::size_t>(std::llround(0.7 * dataset.size())));
    CHECK_FALSE(sp.test_ood.empty());

    CHECK_THROWS_AS(make_splits(dataset, 1, 1.0), InvalidSpec);
    CHECK_THROWS_AS(make_splits(dataset, 1, -0.1), InvalidSpec);
    CHECK_THROWS_AS(make_splits({}, 1, 0.5), NoData);

    // exact reweighting oracle: recompute the target distribution per
    // template from the train histogram and check realized OOD counts
    const std::set<std::string> train_ids(sp.train.begin(), sp.train.end());
    const std::set<std::string> ood_ids(sp.test_ood.begin(), sp.test_ood.end());
    std::set<std::string> iid_ids(sp.test_iid.begin(), sp.test_iid.end());

    // reconstruct the ood pool: held-out items that are neither iid nor ood
    std::set<std::string> dev_ids(sp.dev.begin(), sp.dev.end());
    std::set<std::string> pool_ids;
    {
        std::vector<std::string> pool_order;
        for (const auto& item : dataset)
            if (!train_ids.count(item.question_id) && !dev_ids.count(item.question_id) &&
                !iid_ids.count(item.question_id))
                pool_ids.insert(item.question_id);
    }

    const auto train_hist = histogram(dataset, train_ids);
    const auto pool_hist = histogram(dataset, pool_ids);
    const auto ood_hist = histogram(dataset, ood_ids);

    for (const auto& [tmpl, answers] : train_hist) {
        if (!pool_hist.count(tmpl)) continue;
        double total_train = 0.0;
        std::string majority;
        double best = -1.0;
        for (const auto& [ans, cnt] : answers) {
            total_train += cnt;
            if (cnt > best) {
                best = cnt;
                majority = ans;
            }
        }
        const double p_major = best / total_train;
        if (p_major >= 1.0 - 1e-12) continue;
        std::map<std::string, double> target;
        const double p_major_new = p_major * 0.5;
        const double renorm = (1.0 - p_major_new) / (1.0 - p_major);
        for (const auto& [ans, cnt] : answers)
            target[ans] = ans == majority ? p_major_new : (cnt / total_train) * renorm;
        double scale = 1e30;
        for (const auto& [ans, p] : target) {
            if (p <= 0.0) continue;
            const auto it = pool_hist.at(tmpl).find(ans);
            const double avail = it == pool_hist.at(tmpl).end() ? 0.0 : it->second;
            scale = std::min(scale, avail / p);
        }
        if (scale >= 1e30) scale = 0.0;
        for (const auto& [ans, p] : target) {
            const int expected = static_cast<int>(std::floor(p * scale + 1e-9));
            int realized = 0;
            if (ood_hist.count(tmpl) && ood_hist.at(tmpl).count(ans))
                realized = ood_hist.at(tmpl).at(ans);
            CHECK(realized == expected);
        }
    }
}

TEST_CASE("make_splits: ood_shift=0 keeps answer marginals close to iid") {
    const auto dataset = build_dataset(80, 900);
    const SplitSet sp = make_splits(dataset, 3, 0.0);
    const std::set<std::string> ood_ids(sp.test_ood.begin(), sp.test_ood.end());
    const std::set<std::string> iid_ids(sp.test_iid.begin(), sp.test_iid.end());
    const auto ood_hist = histogram(dataset, ood_ids);
    const auto iid_hist = histogram(dataset, iid_ids);

    // compare per-template majority-answer shares; identical distributions
    // up to sampling noise
    for (const auto& [tmpl, answers] : iid_hist) {
        if (!ood_hist.count(tmpl)) continue;
        double iid_total = 0.0, ood_total = 0.0;
        for (const auto& [ans, cnt] : answers) iid_total += cnt;
        for (const auto& [ans, cnt] : ood_hist.at(tmpl)) ood_total += cnt;
        if (iid_total < 30 || ood_total < 30) continue;
        for (const auto& [ans, cnt] : answers) {
            const double p_iid = cnt / iid_total;
            double p_ood = 0.0;
            if (ood_hist.at(tmpl).count(ans)) p_ood = ood_hist.at(tmpl).at(ans) / ood_total;
            CHECK(std::abs(p_iid - p_ood) < 0.15);
        }
    }
}

TEST_CASE("depth file roundtrip") {
    const Scene s = single_object_scene(2.0, 0.4);
    const geom::DepthMap map = render_depth(s);
    const auto path = std::filesystem::temp_directory_path() / "sws_test.dpth";
    write_depth(map, path);
    const geom::DepthMap back = read_depth(path);
    CHECK(back.height == map.height);
    CHECK(back.width == map.width);
    CHECK(back.values == map.values);
    std::filesystem::remove(path);
}

TEST_CASE("render_appearance marks object pixels") {
    const Scene s = single_object_scene(2.0, 0.5);
    const Image img = render_appearance(s);
    REQUIRE(img.channels == 3);
    CHECK(img.at(32, 32, 2) == 1.0f);  // occupancy at the center
    CHECK(img.at(1, 1, 2) == 0.0f);    // background corner
    CHECK(img.at(32, 32, 0) > 0.0f);
}
