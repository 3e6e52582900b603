#include "sws/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sws/errors.hpp"
#include "sws/io.hpp"

namespace sws::eval {

using nlohmann::json;
using nlohmann::ordered_json;

std::string Prediction::to_json_line() const {
    ordered_json j;
    j["question_id"] = question_id;
    j["answer"] = answer;
    if (has_sr) {
        ordered_json sr;
        sr["subject_id"] = subject_id;
        sr["object_id"] = object_id;
        if (!delta.empty()) sr["delta"] = delta;
        if (!bins.empty()) {
            sr["bins"] = bins;
            sr["num_classes"] = num_classes;
        }
        j["sr"] = sr;
    }
    return j.dump();
}

Prediction Prediction::from_json_line(const std::string& line) {
    const auto j = json::parse(line);
    Prediction p;
    p.question_id = j.at("question_id").get<std::string>();
    p.answer = j.at("answer").get<std::string>();
    if (j.contains("sr")) {
        const auto& sr = j.at("sr");
        p.has_sr = true;
        p.subject_id = sr.at("subject_id").get<std::string>();
        p.object_id = sr.at("object_id").get<std::string>();
        if (sr.contains("delta")) p.delta = sr.at("delta").get<std::vector<double>>();
        if (sr.contains("bins")) {
            p.bins = sr.at("bins").get<std::vector<int>>();
            p.num_classes = sr.at("num_classes").get<int>();
        }
    }
    return p;
}

double vqa_accuracy(const std::vector<Prediction>& preds,
                    const std::map<std::string, scene::QAItem>& gold, Filter filter) {
    int n = 0, correct = 0;
    for (const auto& p : preds) {
        const auto it = gold.find(p.question_id);
        if (it == gold.end()) continue;
        const scene::QAItem& item = it->second;
        const bool is_binary = item.answer == "yes" || item.answer == "no";
        switch (filter) {
            case Filter::all: break;
            case Filter::spatial:
                if (!item.is_spatial) continue;
                break;
            case Filter::open:
                if (is_binary) continue;
                break;
            case Filter::binary:
                if (!is_binary) continue;
                break;
        }
        ++n;
        if (p.answer == item.answer) ++correct;
    }
    if (n == 0) throw EmptyEval("no question matches the requested filter");
    return static_cast<double>(correct) / n;
}

SrMetrics sr_metrics(const std::vector<Prediction>& preds,
                     const std::map<std::string, scene::QAItem>& gold,
                     const std::map<std::string, labels::SRLabels>& labels_by_scene) {
    SrMetrics out;
    double sq_sum = 0.0;
    int sq_n = 0;
    std::map<int, std::pair<int, int>> bin_counts;  // C -> {correct, total}

    for (const auto& p : preds) {
        if (!p.has_sr) continue;
        const auto git = gold.find(p.question_id);
        if (git == gold.end()) continue;
        const auto lit = labels_by_scene.find(git->second.scene_id);
        if (lit == labels_by_scene.end()) continue;
        const labels::SRLabels& lab = lit->second;
        const int i = lab.object_index(p.subject_id);
        const int j = lab.object_index(p.object_id);
        if (i < 0 || j < 0 || i == j) continue;

        if (!p.delta.empty()) {
            for (int d = 0; d < lab.dims && d < static_cast<int>(p.delta.size()); ++d) {
                const double err = p.delta[static_cast<std::size_t>(d)] -
                                   static_cast<double>(lab.rpe_at(i, j, d));
                sq_sum += err * err;
                ++sq_n;
            }
        }
        if (!p.bins.empty() && lab.rpe_bins.count(p.num_classes)) {
            auto& [c_ok, c_all] = bin_counts[p.num_classes];
            for (int d = 0; d < lab.dims && d < static_cast<int>(p.bins.size()); ++d) {
                ++c_all;
                if (p.bins[static_cast<std::size_t>(d)] ==
                    static_cast<int>(lab.bin_at(p.num_classes, i, j, d)))
                    ++c_ok;
            }
        }
    }

    if (sq_n > 0) {
        out.has_mse = true;
        out.mse = sq_sum / sq_n;
        out.n_cells += sq_n;
    }
    for (const auto& [c, counts] : bin_counts) {
        out.bin_accuracy[c] = static_cast<double>(counts.first) / counts.second;
        out.n_cells += counts.second;
    }
    if (out.n_cells == 0) throw EmptyEval("no usable SR prediction");
    return out;
}

AuditResult consistency_audit(const std::vector<Prediction>& preds,
                              const std::map<std::string, scene::QAItem>& gold,
                              const geom::BinSpec& spec) {
    AuditResult out;
    const int center_class = geom::quantize(0.0, spec);

    for (const auto& p : preds) {
        const auto git = gold.find(p.question_id);
        if (git == gold.end() || !git->second.is_spatial) continue;

        scene::Relation predicted_rel;
        try {
            predicted_rel = scene::relation_from_string(p.answer);
            if (predicted_rel == scene::Relation::none) throw InvalidSpec("none");
        } catch (const InvalidSpec&) {
            ++out.n_not_relation;  // answered with a non-relation word; not auditable
            continue;
        }

        if (!p.has_sr || (p.delta.empty() && p.bins.empty())) {
            ++out.n_gap;
            out.verdicts[p.question_id] = Verdict::gap;
            continue;
        }

        const int axis = static_cast<int>(scene::relation_axis(predicted_rel));
        double value;
        if (!p.delta.empty()) {
            if (axis >= static_cast<int>(p.delta.size())) {
                ++out.n_gap;
                out.verdicts[p.question_id] = Verdict::gap;
                continue;
            }
            value = p.delta[static_cast<std::size_t>(axis)];
        } else {
            if (axis >= static_cast<int>(p.bins.size()) || p.num_classes != spec.num_classes) {
                ++out.n_gap;
                out.verdicts[p.question_id] = Verdict::gap;
                continue;
            }
            value = geom::dequantize(p.bins[static_cast<std::size_t>(axis)], spec);
        }

        value = std::clamp(value, -1.0, 1.0);
        if (geom::quantize(value, spec) == center_class) {
            ++out.n_abstain;
            out.verdicts[p.question_id] = Verdict::abstain;
            continue;
        }
        const int implied = scene::relation_sign(predicted_rel);
        const bool consistent = (value < 0 ? -1 : 1) == implied;
        out.verdicts[p.question_id] = consistent ? Verdict::consistent : Verdict::inconsistent;
        if (consistent) ++out.n_consistent;
        else ++out.n_inconsistent;
    }

    if (out.n_audited() > 0) {
        out.consistency_rate = static_cast<double>(out.n_consistent) / out.n_audited();
        out.inconsistency_rate = static_cast<double>(out.n_inconsistent) / out.n_audited();
    } else {
        out.consistency_rate = std::nan("");
        out.inconsistency_rate = std::nan("");
    }
    return out;
}

EvalReport evaluate_split(const std::string& split_name, const std::vector<Prediction>& preds,
                          const std::map<std::string, scene::QAItem>& gold,
                          const std::map<std::string, labels::SRLabels>& labels_by_scene,
                          const geom::BinSpec& audit_spec) {
    EvalReport r;
    r.split = split_name;
    r.n_questions = static_cast<int>(preds.size());
    r.vqa_accuracy = vqa_accuracy(preds, gold, Filter::all);
    const auto safe_acc = [&](Filter f) {
        try {
            return vqa_accuracy(preds, gold, f);
        } catch (const EmptyEval&) {
            return std::nan("");
        }
    };
    r.spatial_accuracy = safe_acc(Filter::spatial);
    r.open_accuracy = safe_acc(Filter::open);
    r.binary_accuracy = safe_acc(Filter::binary);

    try {
        const SrMetrics m = sr_metrics(preds, gold, labels_by_scene);
        r.has_sr_mse = m.has_mse;
        r.sr_mse = m.mse;
        r.bin_accuracy = m.bin_accuracy;
    } catch (const EmptyEval&) {
    }

    const AuditResult audit = consistency_audit(preds, gold, audit_spec);
    r.consistency_rate = audit.consistency_rate;
    r.inconsistency_rate = audit.inconsistency_rate;
    r.n_audited = audit.n_audited();
    r.n_abstain = audit.n_abstain;
    r.n_gaps = audit.n_gap;
    return r;
}

std::string EvalReport::to_json() const {
    ordered_json j;
    j["split"] = split;
    j["n_questions"] = n_questions;
    j["vqa_accuracy"] = vqa_accuracy;
    j["spatial_accuracy"] = spatial_accuracy;
    j["open_accuracy"] = open_accuracy;
    j["binary_accuracy"] = binary_accuracy;
    if (has_sr_mse) j["sr_mse"] = sr_mse;
    if (!bin_accuracy.empty()) {
        ordered_json b;
        for (const auto& [c, acc] : bin_accuracy) b[std::to_string(c)] = acc;
        j["bin_accuracy"] = b;
    }
    j["consistency_rate"] = consistency_rate;
    j["inconsistency_rate"] = inconsistency_rate;
    j["n_audited"] = n_audited;
    j["n_abstain"] = n_abstain;
    j["n_gaps"] = n_gaps;
    return j.dump();
}

EvalReport EvalReport::from_json(const std::string& s) {
    const auto j = json::parse(s);
    EvalReport r;
    r.split = j.at("split").get<std::string>();
    r.n_questions = j.at("n_questions").get<int>();
    const auto num = [&](const char* key) {
        return j.at(key).is_null() ? std::nan("") : j.at(key).get<double>();
    };
    r.vqa_accuracy = num("vqa_accuracy");
    r.spatial_accuracy = num("spatial_accuracy");
    r.open_accuracy = num("open_accuracy");
    r.binary_accuracy = num("binary_accuracy");
    if (j.contains("sr_mse")) {
        r.has_sr_mse = true;
        r.sr_mse = j.at("sr_mse").get<double>();
    }
    if (j.contains("bin_accuracy"))
        for (const auto& [key, value] : j.at("bin_accuracy").items())
            r.bin_accuracy[std::stoi(key)] = value.get<double>();
    r.consistency_rate = num("consistency_rate");
    r.inconsistency_rate = num("inconsistency_rate");
    r.n_audited = j.at("n_audited").get<int>();
    r.n_abstain = j.at("n_abstain").get<int>();
    r.n_gaps = j.at("n_gaps").get<int>();
    return r;
}

namespace {

std::string csv_number(double v) {
    if (std::isnan(v)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

std::vector<std::filesystem::path> report_emit(const std::vector<EvalReport>& reports,
                                               const std::string& format,
                                               const std::vector<FewshotRow>& fewshot,
                                               const std::filesystem::path& out_dir) {
    if (reports.empty() && fewshot.empty()) throw EmptyEval("nothing to report");
    if (format != "json" && format != "csv") throw ConfigError("unknown report format: " + format);
    std::filesystem::create_directories(out_dir);
    std::vector<std::filesystem::path> written;

    if (!reports.empty()) {
        if (format == "json") {
            ordered_json arr = ordered_json::array();
            for (const auto& r : reports) arr.push_back(ordered_json::parse(r.to_json()));
            const auto path = out_dir / "reports.json";
            io::write_file(path, arr.dump(2) + "\n");
            written.push_back(path);
        } else {
            std::ostringstream csv;
            csv << "split,n_questions,vqa_accuracy,spatial_accuracy,open_accuracy,"
                   "binary_accuracy,sr_mse,consistency_rate,inconsistency_rate\n";
            for (const auto& r : reports) {
                csv << r.split << ',' << r.n_questions << ',' << csv_number(r.vqa_accuracy) << ','
                    << csv_number(r.spatial_accuracy) << ',' << csv_number(r.open_accuracy) << ','
                    << csv_number(r.binary_accuracy) << ','
                    << (r.has_sr_mse ? csv_number(r.sr_mse) : "nan") << ','
                    << csv_number(r.consistency_rate) << ',' << csv_number(r.inconsistency_rate)
                    << '\n';
            }
            const auto path = out_dir / "reports.csv";
            io::write_file(path, csv.str());
            written.push_back(path);
        }
    }

    if (!fewshot.empty()) {
        std::vector<FewshotRow> rows = fewshot;
        std::stable_sort(rows.begin(), rows.end(), [](const FewshotRow& a, const FewshotRow& b) {
            if (a.fraction != b.fraction) return a.fraction < b.fraction;
            if (a.method != b.method) return a.method < b.method;
            return a.seed < b.seed;
        });
        std::ostringstream csv;
        csv << "fraction,method,spatial_accuracy,seed\n";
        for (const auto& row : rows)
            csv << csv_number(row.fraction) << ',' << row.method << ','
                << csv_number(row.spatial_accuracy) << ',' << row.seed << '\n';
        const auto path = out_dir / "fewshot.csv";
        io::write_file(path, csv.str());
        written.push_back(path);
    }
    return written;
}

std::vector<Prediction> read_predictions(const std::filesystem::path& path) {
    std::vector<Prediction> out;
    std::istringstream in(io::read_text(path));
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(Prediction::from_json_line(line));
    }
    return out;
}

void write_predictions(const std::vector<Prediction>& preds, const std::filesystem::path& path) {
    std::ostringstream out;
    for (const auto& p : preds) out << p.to_json_line() << '\n';
    io::write_file(path, out.str());
}

std::map<std::string, scene::QAItem> read_gold(const std::filesystem::path& qa_jsonl) {
    std::map<std::string, scene::QAItem> gold;
    std::istringstream in(io::read_text(qa_jsonl));
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        scene::QAItem item = scene::QAItem::from_json_line(line);
        gold[item.question_id] = std::move(item);
    }
    return gold;
}

std::map<std::string, labels::SRLabels> read_labels_dir(const std::filesystem::path& dir) {
    std::map<std::string, labels::SRLabels> out;
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.path().extension() == ".srlb") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        labels::SRLabels lab = labels::read_labels(f);
        out[lab.scene_id] = std::move(lab);
    }
    return out;
}

}  // namespace sws::eval
