#include "sws/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sws/errors.hpp"
#include "sws/nnkit/adam.hpp"
#include "sws/rng.hpp"

namespace sws::train {

using model::ModelConfig;
using model::ModelInputs;
using nn::Graph;
using nn::ParamSet;
using nn::Var;
using nlohmann::json;
using nlohmann::ordered_json;

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (batch_size < 1) throw ConfigError("batch size must be positive");
    if (epochs < 1) throw ConfigError("epoch count must be positive");
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("fraction must lie in (0, 1]");
    if (alpha < 0.0 || alpha > 1.0 || beta < 0.0 || beta > 1.0)
        throw ConfigError("alpha and beta must lie in (0, 1] (0 inherits the model config)");
    if (!loss_mode.empty() && loss_mode != "regression" && loss_mode != "bins")
        throw ConfigError("loss_mode must be 'regression' or 'bins'");
}

std::string TrainConfig::to_json() const {
    ordered_json j;
    j["lr"] = lr;
    j["batch_size"] = batch_size;
    j["epochs"] = epochs;
    j["seed"] = seed;
    j["alpha"] = alpha;
    j["beta"] = beta;
    j["fraction"] = fraction;
    j["loss_mode"] = loss_mode;
    return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& s) {
    json j;
    try {
        j = json::parse(s);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad train config JSON: ") + e.what());
    }
    TrainConfig c;
    c.lr = j.value("lr", c.lr);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.alpha = j.value("alpha", c.alpha);
    c.beta = j.value("beta", c.beta);
    c.fraction = j.value("fraction", c.fraction);
    c.loss_mode = j.value("loss_mode", c.loss_mode);
    c.validate();
    return c;
}

double total_loss(double l_vqa, double l_sr, double alpha, double beta) {
    if (!std::isfinite(l_vqa) || !std::isfinite(l_sr))
        throw NumericalError("total_loss received a non-finite term");
    return alpha * l_vqa + beta * l_sr;
}

namespace {

// element mask over (max_objects x dims): valid object rows
std::vector<std::uint8_t> oce_mask(const ModelConfig& c, int n_objects) {
    std::vector<std::uint8_t> m(static_cast<std::size_t>(c.max_objects) * c.dims, 0);
    for (int i = 0; i < n_objects; ++i)
        for (int d = 0; d < c.dims; ++d) m[static_cast<std::size_t>(i) * c.dims + d] = 1;
    return m;
}

// element mask over (max_objects^2 x dims): valid off-diagonal pairs
std::vector<std::uint8_t> rpe_mask(const ModelConfig& c, int n_objects) {
    const auto n = static_cast<std::size_t>(c.max_objects);
    std::vector<std::uint8_t> m(n * n * static_cast<std::size_t>(c.dims), 0);
    for (int i = 0; i < n_objects; ++i)
        for (int j = 0; j < n_objects; ++j) {
            if (i == j) continue;
            for (int d = 0; d < c.dims; ++d)
                m[(static_cast<std::size_t>(i) * n + static_cast<std::size_t>(j)) * c.dims + d] = 1;
        }
    return m;
}

// per-row masks for the (cells x C) logit layouts
std::vector<std::uint8_t> row_mask_from_elements(const std::vector<std::uint8_t>& m) { return m; }

template <typename T>
nn::Tensor<T> to_tensor(const std::vector<float>& v, std::size_t rows, std::size_t cols) {
    nn::Tensor<T> t(rows, cols);
    for (std::size_t i = 0; i < v.size(); ++i) t.data[i] = static_cast<T>(v[i]);
    return t;
}

}  // namespace

template <typename T>
ExampleLoss example_loss(Graph<T>& g, const ModelConfig& config, const model::ForwardOutputs& out,
                         const ModelInputs& in, double alpha, double beta) {
    ExampleLoss el;
    el.vqa = g.cross_entropy(out.vqa_logits, {in.answer});

    const bool task_oce = config.sr_task == model::SrTask::oce || config.sr_task == model::SrTask::oce_rpe;
    const bool task_rpe = config.sr_task == model::SrTask::rpe || config.sr_task == model::SrTask::oce_rpe;
    const int n = in.n_objects;

    std::vector<Var> sr_terms;
    if (config.sr_task != model::SrTask::none) {
        const auto n_cap = static_cast<std::size_t>(config.max_objects);
        const auto d = static_cast<std::size_t>(config.dims);
        if (config.sr_mode == model::SrMode::regression) {
            if (task_oce && n >= 1)
                sr_terms.push_back(g.mse(out.oce_reg, to_tensor<T>(in.oce_target, n_cap, d),
                                         oce_mask(config, n)));
            if (task_rpe && n >= 2)
                sr_terms.push_back(g.mse(out.rpe_reg, to_tensor<T>(in.rpe_target, n_cap * n_cap, d),
                                         rpe_mask(config, n)));
        } else {
            if (task_oce && n >= 1)
                sr_terms.push_back(g.cross_entropy(out.oce_bin_logits, in.oce_bin_target,
                                                   row_mask_from_elements(oce_mask(config, n))));
            if (task_rpe && n >= 2)
                sr_terms.push_back(g.cross_entropy(out.rpe_bin_logits, in.rpe_bin_target,
                                                   row_mask_from_elements(rpe_mask(config, n))));
        }
    }

    if (!sr_terms.empty()) {
        el.sr = sr_terms.size() == 1 ? sr_terms[0]
                                     : g.scale(g.add(sr_terms[0], sr_terms[1]), T{0.5});
        el.has_sr = true;
        el.loss = g.add(g.scale(el.vqa, static_cast<T>(alpha)), g.scale(el.sr, static_cast<T>(beta)));
    } else {
        el.loss = g.scale(el.vqa, static_cast<T>(alpha));
    }
    return el;
}

template ExampleLoss example_loss<float>(Graph<float>&, const ModelConfig&,
                                         const model::ForwardOutputs&, const ModelInputs&, double,
                                         double);
template ExampleLoss example_loss<double>(Graph<double>&, const ModelConfig&,
                                          const model::ForwardOutputs&, const ModelInputs&, double,
                                          double);

std::vector<int> few_shot_subsample(const std::vector<int>& question_idxs,
                                    const std::vector<int>& answer_ids, double fraction,
                                    std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("fraction must lie in (0, 1]");
    if (question_idxs.size() != answer_ids.size())
        throw ShapeError("one answer id per question required");
    const std::size_t n = question_idxs.size();
    const auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    if (take == 0) throw EmptySubset("fraction rounds to an empty subset");
    if (take >= n) return question_idxs;

    // one seeded permutation whose prefixes are stratified by answer: shuffle
    // within each class, then interleave classes by fractional rank
    std::map<int, std::vector<std::size_t>> by_answer;
    for (std::size_t i = 0; i < n; ++i) by_answer[answer_ids[i]].push_back(i);

    Rng rng(seed);
    struct Key {
        double rank;
        int answer;
        std::size_t pos;
    };
    std::vector<Key> keys;
    keys.reserve(n);
    for (auto& [answer, members] : by_answer) {
        for (std::size_t i = members.size(); i > 1; --i)
            std::swap(members[i - 1], members[rng.uniform_int(i)]);
        for (std::size_t r = 0; r < members.size(); ++r)
            keys.push_back({static_cast<double>(r + 1) / static_cast<double>(members.size() + 1),
                            answer, members[r]});
    }
    std::sort(keys.begin(), keys.end(), [](const Key& a, const Key& b) {
        if (a.rank != b.rank) return a.rank < b.rank;
        if (a.answer != b.answer) return a.answer < b.answer;
        return a.pos < b.pos;
    });

    std::vector<int> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) out.push_back(question_idxs[keys[i].pos]);
    return out;
}

EvalPass predict_split(const model::Model<float>& m, const data::Dataset& ds,
                       const std::vector<int>& question_idxs, double alpha, double beta) {
    const ModelConfig& cfg = m.config();
    EvalPass pass;
    double vqa_sum = 0.0, sr_sum = 0.0;
    int sr_n = 0;

    for (int qidx : question_idxs) {
        const data::Question& q = ds.questions.at(static_cast<std::size_t>(qidx));
        const ModelInputs in = data::assemble(ds, cfg, qidx);
        Graph<float> g;
        const auto vars = m.register_params(g, false);
        const model::ForwardOutputs out = m.forward(g, vars, in);
        const ExampleLoss el = example_loss(g, cfg, out, in, alpha, beta);
        vqa_sum += static_cast<double>(g.value(el.vqa).data[0]);
        if (el.has_sr) {
            sr_sum += static_cast<double>(g.value(el.sr).data[0]);
            ++sr_n;
        }

        eval::Prediction pred;
        pred.question_id = q.item.question_id;
        const auto& logits = g.value(out.vqa_logits);
        std::size_t best = 0;
        for (std::size_t a = 1; a < logits.cols; ++a)
            if (logits.data[a] > logits.data[best]) best = a;
        pred.answer = ds.answer_vocab.at(best);

        // SR output for the question's pair, when the model can produce one
        if (q.item.is_spatial && q.subject_idx >= 0 && q.object_idx >= 0 &&
            q.subject_idx < in.n_objects && q.object_idx < in.n_objects &&
            cfg.sr_task != model::SrTask::none) {
            const auto n_cap = static_cast<std::size_t>(cfg.max_objects);
            const auto d_count = static_cast<std::size_t>(cfg.dims);
            const auto i = static_cast<std::size_t>(q.subject_idx);
            const auto j = static_cast<std::size_t>(q.object_idx);
            pred.subject_id = q.item.subject_id;
            pred.object_id = q.item.object_id;
            if (out.has_rpe_bins) {
                const auto& bl = g.value(out.rpe_bin_logits);
                for (std::size_t d = 0; d < d_count; ++d) {
                    const std::size_t row = (i * n_cap + j) * d_count + d;
                    std::size_t arg = 0;
                    for (std::size_t c = 1; c < bl.cols; ++c)
                        if (bl.at(row, c) > bl.at(row, arg)) arg = c;
                    pred.bins.push_back(static_cast<int>(arg));
                }
                pred.num_classes = cfg.bins;
                pred.has_sr = true;
            } else if (out.has_oce_reg) {
                const auto& oce = g.value(out.oce_reg);
                for (std::size_t d = 0; d < d_count; ++d)
                    pred.delta.push_back(static_cast<double>(oce.at(i, d)) -
                                         static_cast<double>(oce.at(j, d)));
                pred.has_sr = true;
            } else if (out.has_oce_bins) {
                // per-object location bins; the pair delta is the midpoint gap
                const auto& bl = g.value(out.oce_bin_logits);
                const geom::BinSpec spec = geom::make_bin_spec(1.5, cfg.bins);
                for (std::size_t d = 0; d < d_count; ++d) {
                    const auto row_of = [&](std::size_t obj) { return obj * d_count + d; };
                    std::size_t ai = 0, aj = 0;
                    for (std::size_t c = 1; c < bl.cols; ++c) {
                        if (bl.at(row_of(i), c) > bl.at(row_of(i), ai)) ai = c;
                        if (bl.at(row_of(j), c) > bl.at(row_of(j), aj)) aj = c;
                    }
                    pred.delta.push_back(geom::dequantize(static_cast<int>(ai), spec) -
                                         geom::dequantize(static_cast<int>(aj), spec));
                }
                pred.has_sr = true;
            }
        }
        pass.preds.push_back(std::move(pred));
    }

    if (!question_idxs.empty()) pass.mean_vqa_loss = vqa_sum / static_cast<double>(question_idxs.size());
    if (sr_n > 0) {
        pass.mean_sr_loss = sr_sum / sr_n;
        pass.has_sr = true;
    }
    return pass;
}

namespace {

struct SplitStats {
    double vqa_acc = 0.0;
    double spatial_acc = 0.0;
    double sr_loss = 0.0;
    double vqa_loss = 0.0;
    double total = 0.0;
    double consistency = std::nan("");
    bool has_sr = false;
};

std::string metrics_header(bool with_sr) {
    return with_sr ? "epoch,split,vqa_acc,spatial_acc,sr_loss,vqa_loss,total_loss,consistency"
                   : "epoch,split,vqa_acc,spatial_acc,vqa_loss,total_loss,consistency";
}

std::string metrics_row(int epoch, const std::string& split, const SplitStats& s, bool with_sr) {
    char buf[256];
    const auto fmt = [](double v) {
        if (std::isnan(v)) return std::string("nan");
        char b[32];
        std::snprintf(b, sizeof(b), "%.6f", v);
        return std::string(b);
    };
    std::string row = std::to_string(epoch) + "," + split + "," + fmt(s.vqa_acc) + "," +
                      fmt(s.spatial_acc);
    if (with_sr) row += "," + fmt(s.sr_loss);
    row += "," + fmt(s.vqa_loss) + "," + fmt(s.total) + "," + fmt(s.consistency);
    (void)buf;
    return row;
}

SplitStats stats_from_pass(const EvalPass& pass, const data::Dataset& ds,
                           const std::map<std::string, scene::QAItem>& gold,
                           const geom::BinSpec& audit_spec, double alpha, double beta) {
    SplitStats s;
    (void)ds;
    s.vqa_acc = eval::vqa_accuracy(pass.preds, gold, eval::Filter::all);
    try {
        s.spatial_acc = eval::vqa_accuracy(pass.preds, gold, eval::Filter::spatial);
    } catch (const EmptyEval&) {
        s.spatial_acc = std::nan("");
    }
    s.vqa_loss = pass.mean_vqa_loss;
    s.sr_loss = pass.has_sr ? pass.mean_sr_loss : std::nan("");
    s.has_sr = pass.has_sr;
    s.total = total_loss(pass.mean_vqa_loss, pass.has_sr ? pass.mean_sr_loss : 0.0, alpha, beta);
    const eval::AuditResult audit = eval::consistency_audit(pass.preds, gold, audit_spec);
    s.consistency = audit.consistency_rate;
    return s;
}

}  // namespace

TrainResult run_training(ModelConfig mc, TrainConfig tc, const data::Dataset& ds, bool verbose) {
    tc.validate();
    mc.token_vocab = ds.token_vocab.size();
    mc.answer_vocab = static_cast<int>(ds.answer_vocab.size());
    mc.validate();
    if (!tc.loss_mode.empty() && tc.loss_mode != model::to_string(mc.sr_mode))
        throw ConfigError("train loss_mode '" + tc.loss_mode + "' conflicts with the model sr_mode");
    const double alpha = tc.alpha > 0.0 ? tc.alpha : mc.alpha;
    const double beta = tc.beta > 0.0 ? tc.beta : mc.beta;
    const bool with_sr = mc.sr_task != model::SrTask::none;

    std::vector<int> train_idx = ds.split_questions("train");
    if (tc.fraction < 1.0) {
        std::vector<int> answers;
        answers.reserve(train_idx.size());
        for (int q : train_idx) answers.push_back(ds.questions[static_cast<std::size_t>(q)].answer_id);
        train_idx = few_shot_subsample(train_idx, answers, tc.fraction, tc.seed);
    }
    const std::vector<int> dev_idx = ds.split_questions("dev");

    std::map<std::string, scene::QAItem> gold;
    for (const auto& q : ds.questions) gold[q.item.question_id] = q.item;
    const geom::BinSpec audit_spec = geom::make_bin_spec(1.5, mc.bins);

    model::Model<float> m(mc);
    nn::AdamState<float> adam;
    adam.lr = tc.lr;

    TrainResult result;
    std::ostringstream csv;
    csv << metrics_header(with_sr) << '\n';

    double best_acc = -1.0;
    double best_sr = 1e30;
    nn::ParamSet<float> best_params = m.params();
    int best_epoch = 0;
    std::int64_t step = 0;

    Rng shuffle_rng(tc.seed);
    try {
        for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
            std::vector<int> order = train_idx;
            Rng erng = shuffle_rng.fork(static_cast<std::uint64_t>(epoch));
            for (std::size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[erng.uniform_int(i)]);

            double vqa_sum = 0.0, sr_sum = 0.0, total_sum = 0.0;
            int vqa_correct = 0, spatial_correct = 0, spatial_n = 0, sr_n = 0;

            for (std::size_t start = 0; start < order.size();
                 start += static_cast<std::size_t>(tc.batch_size)) {
                const std::size_t stop =
                    std::min(order.size(), start + static_cast<std::size_t>(tc.batch_size));
                nn::ParamSet<float> grads;
                for (std::size_t k = start; k < stop; ++k) {
                    const int qidx = order[k];
                    const ModelInputs in = data::assemble(ds, mc, qidx);
                    Graph<float> g;
                    const auto vars = m.register_params(g, true);
                    const model::ForwardOutputs out = m.forward(g, vars, in);
                    const ExampleLoss el = example_loss(g, mc, out, in, alpha, beta);
                    g.backward(el.loss);
                    for (const auto& [name, var] : vars) {
                        const auto& grad = g.grad(var);
                        auto it = grads.find(name);
                        if (it == grads.end()) {
                            grads[name] = grad;
                        } else {
                            for (std::size_t i = 0; i < grad.size(); ++i)
                                it->second.data[i] += grad.data[i];
                        }
                    }

                    vqa_sum += static_cast<double>(g.value(el.vqa).data[0]);
                    total_sum += static_cast<double>(g.value(el.loss).data[0]);
                    if (el.has_sr) {
                        sr_sum += static_cast<double>(g.value(el.sr).data[0]);
                        ++sr_n;
                    }
                    const auto& logits = g.value(out.vqa_logits);
                    std::size_t arg = 0;
                    for (std::size_t a = 1; a < logits.cols; ++a)
                        if (logits.data[a] > logits.data[arg]) arg = a;
                    const data::Question& q = ds.questions[static_cast<std::size_t>(qidx)];
                    const bool correct = static_cast<int>(arg) == q.answer_id;
                    vqa_correct += correct;
                    if (q.item.is_spatial) {
                        ++spatial_n;
                        spatial_correct += correct;
                    }
                }
                const auto batch_n = static_cast<float>(stop - start);
                for (auto& [name, gsum] : grads)
                    for (auto& v : gsum.data) v /= batch_n;
                adam_step(m.params(), grads, adam);
                ++step;
            }

            SplitStats train_stats;
            const auto denom = static_cast<double>(order.size());
            train_stats.vqa_acc = static_cast<double>(vqa_correct) / denom;
            train_stats.spatial_acc =
                spatial_n > 0 ? static_cast<double>(spatial_correct) / spatial_n : std::nan("");
            train_stats.vqa_loss = vqa_sum / denom;
            train_stats.sr_loss = sr_n > 0 ? sr_sum / sr_n : std::nan("");
            train_stats.total = total_sum / denom;
            csv << metrics_row(epoch, "train", train_stats, with_sr) << '\n';

            const EvalPass dev_pass = predict_split(m, ds, dev_idx, alpha, beta);
            const SplitStats dev_stats = stats_from_pass(dev_pass, ds, gold, audit_spec, alpha, beta);
            csv << metrics_row(epoch, "dev", dev_stats, with_sr) << '\n';
            if (verbose)
                std::fprintf(stderr, "epoch %d: train vqa %.3f | dev vqa %.3f spatial %.3f\n",
                             epoch, train_stats.vqa_acc, dev_stats.vqa_acc, dev_stats.spatial_acc);

            const double dev_sr = dev_stats.has_sr ? dev_stats.sr_loss : dev_stats.vqa_loss;
            if (dev_stats.vqa_acc > best_acc ||
                (dev_stats.vqa_acc == best_acc && dev_sr < best_sr)) {
                best_acc = dev_stats.vqa_acc;
                best_sr = dev_sr;
                best_params = m.params();
                best_epoch = epoch;
            }
        }
    } catch (const NumericalError& e) {
        result.aborted = true;
        result.abort_reason = e.what();
    }

    result.metrics_csv = csv.str();
    result.best.config = mc;
    result.best.token_vocab = ds.token_vocab.words;
    result.best.answer_vocab = ds.answer_vocab;
    result.best.step = step;
    result.best.epoch = best_epoch;
    result.best.dev_vqa_acc = best_acc;
    result.best.dev_sr_loss = best_sr;
    result.best.params = best_params;

    // final predictions from the best parameters
    model::Model<float> best_model(mc, best_params);
    result.dev_preds = predict_split(best_model, ds, dev_idx, alpha, beta).preds;
    result.test_iid_preds =
        predict_split(best_model, ds, ds.split_questions("test_iid"), alpha, beta).preds;
    result.test_ood_preds =
        predict_split(best_model, ds, ds.split_questions("test_ood"), alpha, beta).preds;
    return result;
}

}  // namespace sws::train
