#include "sws/cli.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <functional>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sws/dataset.hpp"
#include "sws/errors.hpp"
#include "sws/evalkit.hpp"
#include "sws/io.hpp"
#include "sws/labels.hpp"
#include "sws/manifest.hpp"
#include "sws/model.hpp"
#include "sws/nnkit/gradcheck.hpp"
#include "sws/rng.hpp"
#include "sws/scenegen.hpp"
#include "sws/train.hpp"

namespace sws::cli {

using nlohmann::json;
using nlohmann::ordered_json;

namespace fs = std::filesystem;

int worker_count() {
    if (const char* env = std::getenv("SWS_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

namespace {

/// Runs jobs on up to `workers` threads; rethrows the first failure.
void run_parallel(const std::vector<std::function<void()>>& jobs, int workers) {
    if (jobs.empty()) return;
    workers = std::max(1, std::min<int>(workers, static_cast<int>(jobs.size())));
    if (workers == 1) {
        for (const auto& job : jobs) job();
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= jobs.size()) return;
                try {
                    jobs[i]();
                } catch (...) {
                    std::lock_guard<std::mutex> lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

std::vector<double> parse_fractions(const std::string& csv) {
    std::vector<double> out;
    std::istringstream in(csv);
    std::string item;
    while (std::getline(in, item, ',')) out.push_back(std::stod(item));
    if (out.empty()) throw ConfigError("empty fraction list");
    return out;
}

std::vector<int> parse_int_list(const std::string& csv) {
    std::vector<int> out;
    std::istringstream in(csv);
    std::string item;
    while (std::getline(in, item, ',')) out.push_back(std::stoi(item));
    return out;
}

model::ModelConfig load_model_config(const std::string& path) {
    if (path.empty()) return model::ModelConfig{};
    return model::ModelConfig::from_json(io::read_text(path));
}

train::TrainConfig load_train_config(const std::string& path) {
    if (path.empty()) return train::TrainConfig{};
    return train::TrainConfig::from_json(io::read_text(path));
}

// -----------------------------------------------------------------------
// gen

struct GenOptions {
    std::uint64_t seed = 1;
    int scenes = 100;
    int objects = 5;
    int questions = 5;
    double ood_shift = 0.5;
    double ratio_nonspatial = 0.3;
    std::string out;
};

int cmd_gen(const GenOptions& opt, const std::vector<std::string>& argv) {
    scene::SceneSpec spec;
    spec.n_objects = opt.objects;
    scene::QaOptions qa_opts;
    qa_opts.ratio_nonspatial = opt.ratio_nonspatial;
    qa_opts.depth_global_max = spec.room_depth_m;
    if (opt.scenes < 1) throw InvalidSpec("scene count must be positive");
    if (opt.questions < 1) throw InvalidSpec("questions per scene must be positive");

    const fs::path out_dir(opt.out);
    fs::create_directories(out_dir / "scenes");
    fs::create_directories(out_dir / "depth");

    struct SceneOut {
        std::string scene_json;
        std::string scene_id;
        geom::DepthMap depth;
        std::vector<scene::QAItem> questions;
    };
    std::vector<SceneOut> results(static_cast<std::size_t>(opt.scenes));

    // per-index seed streams make the result independent of worker count
    const Rng base(opt.seed);
    std::vector<std::function<void()>> jobs;
    for (int i = 0; i < opt.scenes; ++i) {
        jobs.emplace_back([&, i] {
            const std::uint64_t scene_seed = base.fork(static_cast<std::uint64_t>(i)).next_u64();
            const std::uint64_t qa_seed =
                base.fork(0x100000000ULL + static_cast<std::uint64_t>(i)).next_u64();
            const scene::Scene sc = scene::generate_scene(scene_seed, spec);
            SceneOut& slot = results[static_cast<std::size_t>(i)];
            slot.scene_id = sc.scene_id;
            slot.scene_json = sc.to_json();
            slot.depth = scene::render_depth(sc);
            slot.questions = scene::generate_questions(sc, qa_seed, opt.questions, qa_opts, &slot.depth);
        });
    }
    run_parallel(jobs, worker_count());

    std::vector<scene::QAItem> all_items;
    std::ostringstream qa_stream;
    for (const auto& slot : results) {
        io::write_file(out_dir / "scenes" / (slot.scene_id + ".json"), slot.scene_json);
        scene::write_depth(slot.depth, out_dir / "depth" / (slot.scene_id + ".dpth"));
        for (const auto& item : slot.questions) {
            qa_stream << item.to_json_line() << '\n';
            all_items.push_back(item);
        }
    }
    io::write_file(out_dir / "qa.jsonl", qa_stream.str());

    const scene::SplitSet splits = scene::make_splits(all_items, opt.seed, opt.ood_shift);
    io::write_file(out_dir / "splits.json", splits.to_json());

    ordered_json meta;
    meta["format_version"] = 1;
    meta["seed"] = opt.seed;
    meta["n_scenes"] = opt.scenes;
    meta["n_objects"] = opt.objects;
    meta["questions_per_scene"] = opt.questions;
    meta["ood_shift"] = opt.ood_shift;
    meta["ratio_nonspatial"] = opt.ratio_nonspatial;
    meta["eps_tie_m"] = qa_opts.eps_tie_m;
    meta["room_depth_m"] = spec.room_depth_m;
    meta["answer_vocab"] = scene::answer_vocabulary();
    io::write_file(out_dir / "meta.json", meta.dump(2) + "\n");

    write_manifest(out_dir, "gen", argv, meta.dump(), {},
                   {out_dir / "scenes", out_dir / "depth", out_dir / "qa.jsonl",
                    out_dir / "splits.json", out_dir / "meta.json"});
    std::printf("gen: %d scenes, %zu questions -> %s\n", opt.scenes, all_items.size(),
                out_dir.string().c_str());
    return 0;
}

// -----------------------------------------------------------------------
// labels

struct LabelsOptions {
    std::string scenes_dir;
    std::string depth_dir;
    int dims = 3;
    std::string bins = "3,7,15,30";
    std::string out;
};

int cmd_labels(const LabelsOptions& opt, const std::vector<std::string>& argv) {
    const fs::path scenes_dir(opt.scenes_dir);
    const fs::path depth_dir(opt.depth_dir);
    if (!fs::is_directory(scenes_dir)) throw NoData("missing scene directory: " + opt.scenes_dir);
    if (!fs::is_directory(depth_dir)) throw NoData("missing depth directory: " + opt.depth_dir);
    const std::vector<int> bin_counts = parse_int_list(opt.bins);

    std::vector<fs::path> scene_files;
    for (const auto& entry : fs::directory_iterator(scenes_dir))
        if (entry.path().extension() == ".json") scene_files.push_back(entry.path());
    std::sort(scene_files.begin(), scene_files.end());
    if (scene_files.empty()) throw NoData("no scenes in " + opt.scenes_dir);

    std::vector<fs::path> depth_files;
    for (const auto& entry : fs::directory_iterator(depth_dir))
        if (entry.path().extension() == ".dpth") depth_files.push_back(entry.path());
    std::sort(depth_files.begin(), depth_files.end());

    // two-phase pipeline: the dataset-wide normalizer first, then labels
    const double global_max = labels::dataset_depth_max(depth_files);

    const fs::path out_dir(opt.out);
    fs::create_directories(out_dir);
    std::vector<std::function<void()>> jobs;
    for (const auto& file : scene_files) {
        jobs.emplace_back([&, file] {
            const scene::Scene sc = scene::Scene::from_json(io::read_text(file));
            const geom::DepthMap raw = scene::read_depth(depth_dir / (sc.scene_id + ".dpth"));
            const geom::DepthMap norm = geom::normalize_depth(raw, global_max);
            std::vector<geom::BBox> boxes;
            std::vector<std::string> ids;
            for (const auto& o : sc.objects) {
                boxes.push_back(scene::normalized_bbox(o, sc.camera));
                ids.push_back(o.object_id);
            }
            const labels::SRLabels lab =
                labels::build_labels(sc.scene_id, boxes, norm, opt.dims, bin_counts, ids);
            labels::write_labels(lab, out_dir / (sc.scene_id + ".srlb"));
        });
    }
    run_parallel(jobs, worker_count());

    ordered_json meta;
    meta["dims"] = opt.dims;
    meta["bins"] = bin_counts;
    meta["global_depth_max"] = global_max;
    meta["n_scenes"] = scene_files.size();
    io::write_file(out_dir / "labels_meta.json", meta.dump(2) + "\n");
    write_manifest(out_dir, "labels", argv, meta.dump(), {scenes_dir, depth_dir},
                   {out_dir});
    std::printf("labels: %zu scenes, depth max %.4f -> %s\n", scene_files.size(), global_max,
                out_dir.string().c_str());
    return 0;
}

// -----------------------------------------------------------------------
// train

struct TrainOptions {
    std::string model_config;
    std::string train_config;
    std::string data;
    std::string labels_dir;
    std::string out;
    bool paper_lr = false;
    bool verbose = false;
};

int cmd_train(const TrainOptions& opt, const std::vector<std::string>& argv) {
    model::ModelConfig mc = load_model_config(opt.model_config);
    train::TrainConfig tc = load_train_config(opt.train_config);
    if (opt.paper_lr) tc.lr = 1e-5;  // published setting, assumes a pretrained start

    const fs::path data_dir(opt.data);
    const fs::path labels_dir = opt.labels_dir.empty() ? data_dir / "labels" : fs::path(opt.labels_dir);
    const bool need_labels =
        mc.sr_task != model::SrTask::none || mc.relpos_input != model::RelposInput::none;
    const data::Dataset ds = data::load_dataset(data_dir, labels_dir, need_labels, mc.use_patches);

    const train::TrainResult result = train::run_training(mc, tc, ds, opt.verbose);

    const fs::path out_dir(opt.out);
    fs::create_directories(out_dir);
    io::write_file(out_dir / "metrics.csv", result.metrics_csv);
    model::write_checkpoint(result.best, out_dir / "best.ckpt");
    eval::write_predictions(result.dev_preds, out_dir / "predictions_dev.jsonl");
    eval::write_predictions(result.test_iid_preds, out_dir / "predictions_test_iid.jsonl");
    eval::write_predictions(result.test_ood_preds, out_dir / "predictions_test_ood.jsonl");

    ordered_json cfg;
    cfg["model"] = ordered_json::parse(result.best.config.to_json());
    cfg["train"] = ordered_json::parse(tc.to_json());
    write_manifest(out_dir, "train", argv, cfg.dump(), {data_dir, labels_dir},
                   {out_dir / "metrics.csv", out_dir / "best.ckpt",
                    out_dir / "predictions_dev.jsonl", out_dir / "predictions_test_iid.jsonl",
                    out_dir / "predictions_test_ood.jsonl"});

    if (result.aborted) {
        std::fprintf(stderr, "train: aborted on numerical error: %s (last good checkpoint kept)\n",
                     result.abort_reason.c_str());
        return 3;
    }
    std::printf("train: best dev vqa accuracy %.4f (epoch %d) -> %s\n", result.best.dev_vqa_acc,
                result.best.epoch, out_dir.string().c_str());
    return 0;
}

// -----------------------------------------------------------------------
// eval / audit

struct EvalOptions {
    std::string pred;
    std::string gold;
    std::string labels_dir;
    std::string report;
    std::string split = "eval";
    int bins = 15;
};

int cmd_eval(const EvalOptions& opt, const std::vector<std::string>& argv) {
    const auto preds = eval::read_predictions(opt.pred);
    const auto gold = eval::read_gold(opt.gold);
    std::map<std::string, labels::SRLabels> labels_by_scene;
    if (!opt.labels_dir.empty()) labels_by_scene = eval::read_labels_dir(opt.labels_dir);
    const geom::BinSpec spec = geom::make_bin_spec(1.5, opt.bins);
    const eval::EvalReport report =
        eval::evaluate_split(opt.split, preds, gold, labels_by_scene, spec);
    if (!opt.report.empty()) {
        io::write_file(opt.report, report.to_json() + "\n");
        const fs::path report_path(opt.report);
        if (report_path.has_parent_path())
            write_manifest(report_path.parent_path(), "eval", argv, report.to_json(),
                           {fs::path(opt.pred), fs::path(opt.gold)}, {report_path});
    }
    std::printf("%s\n", report.to_json().c_str());
    return 0;
}

struct AuditOptions {
    std::string pred;
    std::string gold;
    int bins = 15;
};

int cmd_audit(const AuditOptions& opt, const std::vector<std::string>& argv) {
    (void)argv;
    const auto preds = eval::read_predictions(opt.pred);
    const auto gold = eval::read_gold(opt.gold);
    const geom::BinSpec spec = geom::make_bin_spec(1.5, opt.bins);
    const eval::AuditResult audit = eval::consistency_audit(preds, gold, spec);
    ordered_json j;
    j["bins"] = opt.bins;
    j["n_consistent"] = audit.n_consistent;
    j["n_inconsistent"] = audit.n_inconsistent;
    j["n_abstain"] = audit.n_abstain;
    j["n_gap"] = audit.n_gap;
    j["consistency_rate"] = audit.consistency_rate;
    j["inconsistency_rate"] = audit.inconsistency_rate;
    std::printf("%s\n", j.dump().c_str());
    return 0;
}

// -----------------------------------------------------------------------
// fewshot

struct FewshotOptions {
    std::string data;
    std::string labels_dir;
    std::string model_config;
    std::string baseline_config;
    std::string train_config;
    std::string fractions = "0.01,0.05,0.1,0.25,0.5,1.0";
    int seeds = 3;
    std::string out;
};

int cmd_fewshot(const FewshotOptions& opt, const std::vector<std::string>& argv) {
    model::ModelConfig sr_cfg = load_model_config(opt.model_config);
    model::ModelConfig base_cfg;
    if (!opt.baseline_config.empty()) {
        base_cfg = load_model_config(opt.baseline_config);
    } else {
        // matched baseline: same trunk, no SR task, no extra inputs
        base_cfg = sr_cfg;
        base_cfg.sr_task = model::SrTask::none;
        base_cfg.relpos_input = model::RelposInput::none;
        base_cfg.use_patches = false;
        base_cfg.alpha = 1.0;
    }
    const train::TrainConfig tc = load_train_config(opt.train_config);
    const std::vector<double> fractions = parse_fractions(opt.fractions);
    if (opt.seeds < 1) throw ConfigError("seed count must be positive");

    const fs::path data_dir(opt.data);
    const fs::path labels_dir = opt.labels_dir.empty() ? data_dir / "labels" : fs::path(opt.labels_dir);
    const bool need_labels = sr_cfg.sr_task != model::SrTask::none ||
                             sr_cfg.relpos_input != model::RelposInput::none;
    const data::Dataset ds = data::load_dataset(data_dir, labels_dir, need_labels,
                                                sr_cfg.use_patches || base_cfg.use_patches);
    const auto gold = eval::read_gold(data_dir / "qa.jsonl");

    struct Job {
        std::string method;
        double fraction;
        int seed;
    };
    std::vector<Job> spec;
    for (double f : fractions)
        for (int s = 0; s < opt.seeds; ++s)
            for (const char* method : {"baseline", "sr"})
                spec.push_back({method, f, static_cast<int>(tc.seed) + s});

    const fs::path out_dir(opt.out);
    fs::create_directories(out_dir / "runs");
    std::vector<eval::FewshotRow> rows(spec.size());
    std::vector<std::function<void()>> jobs;
    for (std::size_t i = 0; i < spec.size(); ++i) {
        jobs.emplace_back([&, i] {
            const Job& job = spec[i];
            model::ModelConfig mc = job.method == "sr" ? sr_cfg : base_cfg;
            train::TrainConfig run_tc = tc;
            run_tc.fraction = job.fraction;
            run_tc.seed = static_cast<std::uint64_t>(job.seed);
            const train::TrainResult result = train::run_training(mc, run_tc, ds);
            const double spatial =
                eval::vqa_accuracy(result.test_iid_preds, gold, eval::Filter::spatial);
            rows[i] = {job.fraction, job.method, spatial, job.seed};

            char name[128];
            std::snprintf(name, sizeof(name), "%s_f%.4f_s%d", job.method.c_str(), job.fraction,
                          job.seed);
            const fs::path run_dir = out_dir / "runs" / name;
            fs::create_directories(run_dir);
            io::write_file(run_dir / "metrics.csv", result.metrics_csv);
        });
    }
    run_parallel(jobs, worker_count());

    const auto written = eval::report_emit({}, "csv", rows, out_dir);
    ordered_json cfg;
    cfg["fractions"] = fractions;
    cfg["seeds"] = opt.seeds;
    cfg["sr_config"] = ordered_json::parse(sr_cfg.to_json());
    cfg["baseline_config"] = ordered_json::parse(base_cfg.to_json());
    cfg["train_config"] = ordered_json::parse(tc.to_json());
    write_manifest(out_dir, "fewshot", argv, cfg.dump(), {data_dir, labels_dir}, written);
    std::printf("fewshot: %zu runs -> %s\n", spec.size(), (out_dir / "fewshot.csv").string().c_str());
    return 0;
}

// -----------------------------------------------------------------------
// report

struct ReportOptions {
    std::string in;
    std::string format = "csv";
    std::string fewshot_in;
    std::string out;
};

int cmd_report(const ReportOptions& opt, const std::vector<std::string>& argv) {
    std::vector<eval::EvalReport> reports;
    if (!opt.in.empty()) {
        std::istringstream list(opt.in);
        std::string path;
        while (std::getline(list, path, ','))
            reports.push_back(eval::EvalReport::from_json(io::read_text(path)));
    }
    std::vector<eval::FewshotRow> rows;
    if (!opt.fewshot_in.empty()) {
        std::istringstream in(io::read_text(opt.fewshot_in));
        std::string line;
        std::getline(in, line);  // header
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::istringstream cells(line);
            std::string fraction, method, acc, seed;
            std::getline(cells, fraction, ',');
            std::getline(cells, method, ',');
            std::getline(cells, acc, ',');
            std::getline(cells, seed, ',');
            rows.push_back({std::stod(fraction), method, std::stod(acc), std::stoi(seed)});
        }
    }
    const auto written = eval::report_emit(reports, opt.format, rows, fs::path(opt.out));
    ordered_json cfg;
    cfg["format"] = opt.format;
    cfg["n_reports"] = reports.size();
    cfg["n_fewshot_rows"] = rows.size();
    write_manifest(fs::path(opt.out), "report", argv, cfg.dump(), {}, written);
    for (const auto& path : written) std::printf("wrote %s\n", path.string().c_str());
    return 0;
}

// -----------------------------------------------------------------------
// selftest

#define SELFTEST_CHECK(cond, name)                                   \
    do {                                                             \
        if (cond) {                                                  \
            std::printf("ok %s\n", name);                            \
        } else {                                                     \
            std::printf("FAIL %s\n", name);                          \
            failed = true;                                           \
        }                                                            \
    } while (0)

int cmd_selftest() {
    bool failed = false;

    // binning suite
    {
        bool ok = true;
        for (int c_count : {3, 7, 15, 30}) {
            const geom::BinSpec spec = geom::make_bin_spec(1.5, c_count);
            ok = ok && spec.edges.front() == -1.0 && spec.edges.back() == 1.0;
            double sum = 0.0;
            for (double w : spec.widths) sum += w;
            ok = ok && std::abs(sum - 2.0) < 1e-9;
            for (int c = 0; c < c_count; ++c)
                ok = ok && geom::quantize(geom::dequantize(c, spec), spec) == c;
            for (int i = 0; i <= 2000; ++i) {
                const double v = -1.0 + i / 1000.0;
                const int c = geom::quantize(v, spec);
                ok = ok && c >= 0 && c < c_count;
            }
        }
        SELFTEST_CHECK(ok, "binning invariants (C in {3,7,15,30})");
    }

    // geometry antisymmetry
    {
        Rng rng(11);
        bool ok = true;
        for (int t = 0; t < 500; ++t) {
            geom::Centroid a, b;
            a.dims = b.dims = 3;
            for (int d = 0; d < 3; ++d) {
                a.coords[static_cast<std::size_t>(d)] = rng.uniform();
                b.coords[static_cast<std::size_t>(d)] = rng.uniform();
            }
            const auto ab = geom::relative_position(a, b);
            const auto ba = geom::relative_position(b, a);
            for (int d = 0; d < 3; ++d) ok = ok && ab[d] == -ba[d];
        }
        SELFTEST_CHECK(ok, "relative position antisymmetry");
    }

    // gradient check on a small composite network
    {
        Rng rng(7);
        nn::ParamSet<double> params;
        nn::Tensor<double> w1(6, 8), w2(8, 4), b(1, 4);
        for (auto& v : w1.data) v = rng.uniform(-0.5, 0.5);
        for (auto& v : w2.data) v = rng.uniform(-0.5, 0.5);
        for (auto& v : b.data) v = rng.uniform(-0.1, 0.1);
        params["w1"] = w1;
        params["w2"] = w2;
        params["b"] = b;
        nn::Tensor<double> x(3, 6), target(3, 4);
        for (auto& v : x.data) v = rng.uniform(-1, 1);
        for (auto& v : target.data) v = rng.uniform(-1, 1);
        const double err = nn::grad_check(
            [&](nn::Graph<double>& g, const std::map<std::string, nn::Var>& v) {
                const nn::Var h = g.relu(g.matmul(g.constant(x), v.at("w1")));
                const nn::Var y = g.add_rowwise(g.matmul(h, v.at("w2")), v.at("b"));
                return g.mse(g.softmax_rows(y), target);
            },
            params, 1e-4, 3, 1.0);
        SELFTEST_CHECK(err < 1e-4, "gradient check (mlp + softmax)");
    }

    // pipeline determinism: gen, labels, train twice, byte-compare
    {
        const fs::path root = fs::temp_directory_path() / "sws_selftest";
        fs::remove_all(root);
        const auto run_gen = [&](const fs::path& dir) {
            GenOptions g;
            g.seed = 2024;
            g.scenes = 16;
            g.objects = 4;
            g.questions = 4;
            g.out = dir.string();
            cmd_gen(g, {"selftest"});
        };
        run_gen(root / "a");
        run_gen(root / "b");

        const auto dir_equal = [&](const fs::path& a, const fs::path& b) {
            std::vector<fs::path> files;
            for (const auto& entry : fs::recursive_directory_iterator(a))
                if (entry.is_regular_file() && entry.path().filename() != "manifest.json")
                    files.push_back(fs::relative(entry.path(), a));
            std::sort(files.begin(), files.end());
            for (const auto& rel : files)
                if (!fs::exists(b / rel) || io::read_file(a / rel) != io::read_file(b / rel))
                    return false;
            return !files.empty();
        };
        SELFTEST_CHECK(dir_equal(root / "a", root / "b"), "gen determinism (byte-identical)");

        const auto run_labels = [&](const fs::path& data, const fs::path& out) {
            LabelsOptions l;
            l.scenes_dir = (data / "scenes").string();
            l.depth_dir = (data / "depth").string();
            l.out = out.string();
            cmd_labels(l, {"selftest"});
        };
        run_labels(root / "a", root / "a" / "labels");
        run_labels(root / "b", root / "b" / "labels");
        SELFTEST_CHECK(dir_equal(root / "a" / "labels", root / "b" / "labels"),
                       "label determinism (byte-identical)");

        const auto run_train = [&](const fs::path& data) {
            model::ModelConfig mc;
            mc.hidden_dim = 32;
            mc.heads = 2;
            mc.max_objects = 4;
            mc.use_patches = false;
            mc.sr_task = model::SrTask::rpe;
            mc.sr_mode = model::SrMode::bins;
            mc.bins = 15;
            mc.relpos_input = model::RelposInput::early;
            train::TrainConfig tc;
            tc.epochs = 2;
            tc.batch_size = 16;
            const data::Dataset ds = data::load_dataset(data, data / "labels", true, false);
            return train::run_training(mc, tc, ds);
        };
        const auto r1 = run_train(root / "a");
        const auto r2 = run_train(root / "a");
        SELFTEST_CHECK(r1.metrics_csv == r2.metrics_csv, "train determinism (identical metrics)");
        SELFTEST_CHECK(r1.best.params == r2.best.params, "train determinism (identical parameters)");
        fs::remove_all(root);
    }

    return failed ? 2 : 0;
}

#undef SELFTEST_CHECK

}  // namespace

int dispatch(const std::vector<std::string>& args) {
    CLI::App app{"weak-supervision spatial reasoning toolkit"};
    app.require_subcommand(1);

    GenOptions gen_opt;
    auto* gen = app.add_subcommand("gen", "generate scenes, depth maps, questions, splits");
    gen->add_option("--seed", gen_opt.seed);
    gen->add_option("--scenes", gen_opt.scenes);
    gen->add_option("--objects", gen_opt.objects);
    gen->add_option("--questions", gen_opt.questions, "questions per scene");
    gen->add_option("--ood-shift", gen_opt.ood_shift);
    gen->add_option("--ratio-nonspatial", gen_opt.ratio_nonspatial);
    gen->add_option("--out", gen_opt.out)->required();

    LabelsOptions lab_opt;
    auto* lab = app.add_subcommand("labels", "build weak-supervision label files");
    lab->add_option("--scenes", lab_opt.scenes_dir)->required();
    lab->add_option("--depth", lab_opt.depth_dir)->required();
    lab->add_option("--dims", lab_opt.dims);
    lab->add_option("--bins", lab_opt.bins);
    lab->add_option("--out", lab_opt.out)->required();

    TrainOptions train_opt;
    auto* tr = app.add_subcommand("train", "train a model");
    tr->add_option("--model-config", train_opt.model_config);
    tr->add_option("--train-config", train_opt.train_config);
    tr->add_option("--data", train_opt.data)->required();
    tr->add_option("--labels", train_opt.labels_dir);
    tr->add_option("--out", train_opt.out)->required();
    tr->add_flag("--paper-lr", train_opt.paper_lr, "use the published 1e-5 learning rate");
    tr->add_flag("--verbose", train_opt.verbose);

    EvalOptions eval_opt;
    auto* ev = app.add_subcommand("eval", "evaluate a prediction file");
    ev->add_option("--pred", eval_opt.pred)->required();
    ev->add_option("--gold", eval_opt.gold)->required();
    ev->add_option("--labels", eval_opt.labels_dir);
    ev->add_option("--report", eval_opt.report);
    ev->add_option("--split", eval_opt.split);
    ev->add_option("--bins", eval_opt.bins);

    AuditOptions audit_opt;
    auto* au = app.add_subcommand("audit", "SR/answer consistency audit");
    au->add_option("--pred", audit_opt.pred)->required();
    au->add_option("--gold", audit_opt.gold)->required();
    au->add_option("--bins", audit_opt.bins);

    FewshotOptions few_opt;
    auto* fw = app.add_subcommand("fewshot", "few-shot sweep over training fractions");
    fw->add_option("--data", few_opt.data)->required();
    fw->add_option("--labels", few_opt.labels_dir);
    fw->add_option("--model-config", few_opt.model_config);
    fw->add_option("--baseline-config", few_opt.baseline_config);
    fw->add_option("--train-config", few_opt.train_config);
    fw->add_option("--fractions", few_opt.fractions);
    fw->add_option("--seeds", few_opt.seeds);
    fw->add_option("--out", few_opt.out)->required();

    ReportOptions rep_opt;
    auto* rep = app.add_subcommand("report", "merge reports and few-shot curves");
    rep->add_option("--in", rep_opt.in, "comma-separated report JSON files");
    rep->add_option("--format", rep_opt.format);
    rep->add_option("--fewshot-in", rep_opt.fewshot_in);
    rep->add_option("--out", rep_opt.out)->required();

    auto* st = app.add_subcommand("selftest", "geometry/binning/gradient/determinism suites");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        std::ostringstream usage;
        const int code = app.exit(e, usage, usage);
        std::fputs(usage.str().c_str(), stderr);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) return cmd_gen(gen_opt, args);
        if (lab->parsed()) return cmd_labels(lab_opt, args);
        if (tr->parsed()) return cmd_train(train_opt, args);
        if (ev->parsed()) return cmd_eval(eval_opt, args);
        if (au->parsed()) return cmd_audit(audit_opt, args);
        if (fw->parsed()) return cmd_fewshot(few_opt, args);
        if (rep->parsed()) return cmd_report(rep_opt, args);
        if (st->parsed()) return cmd_selftest();
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical error: %s\n", e.what());
        return 3;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return 1;
    } catch (const InvalidSpec& e) {
        std::fprintf(stderr, "invalid specification: %s\n", e.what());
        return 1;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 1;
}

}  // namespace sws::cli
