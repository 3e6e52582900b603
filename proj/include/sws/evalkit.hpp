#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sws/geometry.hpp"
#include "sws/labels.hpp"
#include "sws/scenegen.hpp"

namespace sws::eval {

/// One model prediction: the answer plus, for spatial questions, the SR
/// output for the question's (subject, object) pair.
struct Prediction {
    std::string question_id;
    std::string answer;
    bool has_sr = false;
    std::string subject_id;
    std::string object_id;
    std::vector<double> delta;  // regression mode, D components
    std::vector<int> bins;      // bin mode, D classes
    int num_classes = 0;        // C for bin mode

    std::string to_json_line() const;
    static Prediction from_json_line(const std::string& line);
};

enum class Filter { all, spatial, open, binary };

/// Exact-match accuracy over the filtered items. `binary` means yes/no gold
/// answers, `open` everything else. Throws EmptyEval if the filter matches
/// nothing.
double vqa_accuracy(const std::vector<Prediction>& preds,
                    const std::map<std::string, scene::QAItem>& gold, Filter filter);

struct SrMetrics {
    bool has_mse = false;
    double mse = 0.0;
    std::map<int, double> bin_accuracy;  // C -> fraction correct
    int n_cells = 0;
};

/// SR error over the predicted pairs, matched to the label tensors through
/// the gold items' (subject, object) ids. Regression predictions produce the
/// MSE; bin predictions produce per-C accuracy. Throws EmptyEval when no
/// usable SR prediction exists.
SrMetrics sr_metrics(const std::vector<Prediction>& preds,
                     const std::map<std::string, scene::QAItem>& gold,
                     const std::map<std::string, labels::SRLabels>& labels_by_scene);

enum class Verdict { consistent, inconsistent, abstain, gap, not_relation };

struct AuditResult {
    double consistency_rate = 0.0;    // consistent / (consistent + inconsistent)
    double inconsistency_rate = 0.0;
    int n_consistent = 0;
    int n_inconsistent = 0;
    int n_abstain = 0;
    int n_gap = 0;          // spatial questions answered without an SR output
    int n_not_relation = 0; // spatial questions answered with a non-relation word
    std::map<std::string, Verdict> verdicts;

    int n_audited() const { return n_consistent + n_inconsistent; }
};

/// Faithfulness check between the answer word and the SR output for the same
/// pair: the answer implies a sign on its axis (dist(A,B) = centroid_A -
/// centroid_B, so "left" means negative x); the SR value (raw delta, or the
/// dequantized midpoint of the predicted bin) must match it. Values inside
/// the spec's center bin abstain and are excluded from the rate.
AuditResult consistency_audit(const std::vector<Prediction>& preds,
                              const std::map<std::string, scene::QAItem>& gold,
                              const geom::BinSpec& spec);

struct EvalReport {
    std::string split;
    double vqa_accuracy = 0.0;
    double spatial_accuracy = 0.0;
    double open_accuracy = 0.0;
    double binary_accuracy = 0.0;
    bool has_sr_mse = false;
    double sr_mse = 0.0;
    std::map<int, double> bin_accuracy;
    double consistency_rate = 0.0;
    double inconsistency_rate = 0.0;
    int n_questions = 0;
    int n_audited = 0;
    int n_abstain = 0;
    int n_gaps = 0;

    std::string to_json() const;
    static EvalReport from_json(const std::string& s);
};

/// Full report over aligned predictions/gold (+ labels when SR was emitted).
EvalReport evaluate_split(const std::string& split_name, const std::vector<Prediction>& preds,
                          const std::map<std::string, scene::QAItem>& gold,
                          const std::map<std::string, labels::SRLabels>& labels_by_scene,
                          const geom::BinSpec& audit_spec);

struct FewshotRow {
    double fraction = 0.0;
    std::string method;
    double spatial_accuracy = 0.0;
    int seed = 0;
};

/// Emits collected reports as JSON or CSV plus, when rows are given, the
/// few-shot curve CSV (fraction ascending). Returns the written file paths.
std::vector<std::filesystem::path> report_emit(const std::vector<EvalReport>& reports,
                                               const std::string& format,
                                               const std::vector<FewshotRow>& fewshot,
                                               const std::filesystem::path& out_dir);

std::vector<Prediction> read_predictions(const std::filesystem::path& path);
void write_predictions(const std::vector<Prediction>& preds, const std::filesystem::path& path);

std::map<std::string, scene::QAItem> read_gold(const std::filesystem::path& qa_jsonl);
std::map<std::string, labels::SRLabels> read_labels_dir(const std::filesystem::path& dir);

}  // namespace sws::eval
