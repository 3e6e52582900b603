#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sws/dataset.hpp"
#include "sws/evalkit.hpp"
#include "sws/model.hpp"
#include "sws/nnkit/graph.hpp"

namespace sws::train {

struct TrainConfig {
    double lr = 3e-4;   // from-scratch toy default; the published setting
                        // (1e-5, tuned for a pretrained backbone) is selectable
    int batch_size = 32;
    int epochs = 6;
    std::uint64_t seed = 1;
    double alpha = 0.0;  // 0 = inherit the model config's coefficient
    double beta = 0.0;
    double fraction = 1.0;
    std::string loss_mode;  // optional cross-check: "regression" | "bins"

    void validate() const;
    std::string to_json() const;
    static TrainConfig from_json(const std::string& s);
};

/// alpha * l_vqa + beta * l_sr. Throws NumericalError on non-finite input.
double total_loss(double l_vqa, double l_sr, double alpha, double beta);

/// Losses for one example inside the graph. `sr` is valid only when has_sr.
struct ExampleLoss {
    nn::Var loss;
    nn::Var vqa;
    nn::Var sr;
    bool has_sr = false;
};

/// Builds the joint objective from forward outputs: answer cross-entropy
/// plus the configured SR term (MSE over unmasked coordinates for
/// regression, mean cross-entropy over unmasked (pair, dim) cells for bins;
/// diagonal pairs and padding are always masked). An example with no usable
/// SR cell contributes the VQA term alone.
template <typename T>
ExampleLoss example_loss(nn::Graph<T>& g, const model::ModelConfig& config,
                         const model::ForwardOutputs& out, const model::ModelInputs& in,
                         double alpha, double beta);

/// Deterministic answer-stratified subset of round(fraction * n) questions.
/// Built as a prefix of one seeded interleaved permutation, so subsets nest
/// across fractions for a fixed seed. Throws EmptySubset when the rounded
/// size is zero.
std::vector<int> few_shot_subsample(const std::vector<int>& question_idxs,
                                    const std::vector<int>& answer_ids, double fraction,
                                    std::uint64_t seed);

struct EvalPass {
    std::vector<eval::Prediction> preds;
    double mean_vqa_loss = 0.0;
    double mean_sr_loss = 0.0;
    bool has_sr = false;
};

/// Forward-only pass emitting predictions (answer + SR output for each
/// spatial question's pair) and mean losses.
EvalPass predict_split(const model::Model<float>& m, const data::Dataset& ds,
                       const std::vector<int>& question_idxs, double alpha, double beta);

struct TrainResult {
    model::Checkpoint best;
    std::string metrics_csv;
    bool aborted = false;
    std::string abort_reason;
    std::vector<eval::Prediction> dev_preds;
    std::vector<eval::Prediction> test_iid_preds;
    std::vector<eval::Prediction> test_ood_preds;
};

/// Full training run: seeded shuffles, Adam on the joint loss, per-epoch
/// train/dev metric rows, best-dev checkpoint selection (highest dev VQA
/// accuracy, ties broken by lower SR loss), and final predictions from the
/// best parameters. A NumericalError aborts the loop but keeps the last
/// good checkpoint.
TrainResult run_training(model::ModelConfig mc, TrainConfig tc, const data::Dataset& ds,
                         bool verbose = false);

}  // namespace sws::train
