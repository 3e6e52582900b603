#include "sws/dataset.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sws/errors.hpp"
#include "sws/io.hpp"
#include "sws/patches.hpp"

namespace sws::data {

using nlohmann::json;

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string word;
    while (in >> word) {
        std::transform(word.begin(), word.end(), word.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        out.push_back(word);
    }
    return out;
}

int Vocab::id(const std::string& word) const {
    const auto it = index.find(word);
    return it == index.end() ? 1 : it->second;  // 1 = [unk]
}

Vocab Vocab::from_words(std::vector<std::string> words) {
    Vocab v;
    v.words = std::move(words);
    for (std::size_t i = 0; i < v.words.size(); ++i) v.index[v.words[i]] = static_cast<int>(i);
    return v;
}

Vocab Vocab::build(const std::vector<std::string>& texts,
                   const std::vector<std::string>& extra_words) {
    std::set<std::string> unique;
    for (const auto& text : texts)
        for (auto& w : tokenize(text)) unique.insert(std::move(w));
    for (const auto& w : extra_words) unique.insert(w);
    std::vector<std::string> words{"[pad]", "[unk]"};
    words.insert(words.end(), unique.begin(), unique.end());
    return from_words(std::move(words));
}

const std::vector<std::string>& Dataset::split_ids(const std::string& name) const {
    if (name == "train") return splits.train;
    if (name == "dev") return splits.dev;
    if (name == "test_iid") return splits.test_iid;
    if (name == "test_ood") return splits.test_ood;
    throw ConfigError("unknown split: " + name);
}

std::vector<int> Dataset::split_questions(const std::string& name) const {
    std::vector<int> out;
    for (const auto& id : split_ids(name)) {
        const auto it = question_index.find(id);
        if (it == question_index.end()) throw NoData("split references unknown question " + id);
        out.push_back(it->second);
    }
    return out;
}

Dataset load_dataset(const std::filesystem::path& data_dir,
                     const std::filesystem::path& labels_dir, bool need_labels, bool need_images) {
    Dataset ds;
    ds.data_dir = data_dir;
    if (!std::filesystem::exists(data_dir / "meta.json"))
        throw NoData("not a dataset directory (missing meta.json): " + data_dir.string());

    const auto meta = json::parse(io::read_text(data_dir / "meta.json"));
    ds.answer_vocab = meta.at("answer_vocab").get<std::vector<std::string>>();
    for (std::size_t i = 0; i < ds.answer_vocab.size(); ++i)
        ds.answer_index[ds.answer_vocab[i]] = static_cast<int>(i);

    // scenes, sorted by filename for a stable order
    std::vector<std::filesystem::path> scene_files;
    for (const auto& entry : std::filesystem::directory_iterator(data_dir / "scenes"))
        if (entry.path().extension() == ".json") scene_files.push_back(entry.path());
    std::sort(scene_files.begin(), scene_files.end());
    if (scene_files.empty()) throw NoData("dataset has no scenes: " + data_dir.string());

    for (const auto& file : scene_files) {
        SceneData sd;
        sd.scene = scene::Scene::from_json(io::read_text(file));
        for (const auto& o : sd.scene.objects)
            sd.boxes.push_back(scene::normalized_bbox(o, sd.scene.camera));
        if (need_labels) {
            const auto lab_path = labels_dir / (sd.scene.scene_id + ".srlb");
            if (!std::filesystem::exists(lab_path))
                throw NoData("missing label file " + lab_path.string());
            sd.labels = labels::read_labels(lab_path);
            sd.has_labels = true;
        }
        if (need_images) {
            sd.image = scene::render_appearance(sd.scene);
            sd.has_image = true;
        }
        ds.scene_index[sd.scene.scene_id] = static_cast<int>(ds.scenes.size());
        ds.scenes.push_back(std::move(sd));
    }

    // questions
    {
        std::istringstream in(io::read_text(data_dir / "qa.jsonl"));
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            Question q;
            q.item = scene::QAItem::from_json_line(line);
            const auto sit = ds.scene_index.find(q.item.scene_id);
            if (sit == ds.scene_index.end())
                throw NoData("question " + q.item.question_id + " references unknown scene");
            q.scene_idx = sit->second;
            const auto ait = ds.answer_index.find(q.item.answer);
            if (ait == ds.answer_index.end())
                throw NoData("answer '" + q.item.answer + "' is not in the vocabulary");
            q.answer_id = ait->second;
            if (q.item.is_spatial) {
                const auto& sc = ds.scenes[static_cast<std::size_t>(q.scene_idx)].scene;
                q.subject_idx = sc.object_index(q.item.subject_id);
                q.object_idx = sc.object_index(q.item.object_id);
            }
            ds.question_index[q.item.question_id] = static_cast<int>(ds.questions.size());
            ds.questions.push_back(std::move(q));
        }
    }

    ds.splits = scene::SplitSet::from_json(io::read_text(data_dir / "splits.json"));

    // token vocabulary from the training split only
    std::vector<std::string> train_texts;
    for (const auto& id : ds.splits.train) {
        const auto it = ds.question_index.find(id);
        if (it == ds.question_index.end()) throw NoData("split references unknown question " + id);
        train_texts.push_back(ds.questions[static_cast<std::size_t>(it->second)].item.text);
    }
    ds.token_vocab = Vocab::build(train_texts, ds.answer_vocab);
    for (auto& q : ds.questions)
        for (const auto& w : tokenize(q.item.text)) q.tokens.push_back(ds.token_vocab.id(w));
    for (const auto& a : ds.answer_vocab) ds.answer_token_ids.push_back(ds.token_vocab.id(a));
    return ds;
}

model::ModelInputs assemble(const Dataset& ds, const model::ModelConfig& config, int question_idx) {
    const Question& q = ds.questions.at(static_cast<std::size_t>(question_idx));
    const SceneData& sd = ds.scenes.at(static_cast<std::size_t>(q.scene_idx));
    const int n_cap = config.max_objects;
    const int n = std::min<int>(static_cast<int>(sd.scene.objects.size()), n_cap);
    const int d = config.dims;

    model::ModelInputs in;
    if (static_cast<int>(q.tokens.size()) > config.max_tokens)
        throw ShapeError("question " + q.item.question_id + " exceeds max_tokens");
    in.tokens.assign(static_cast<std::size_t>(config.max_tokens), 0);
    for (std::size_t i = 0; i < q.tokens.size(); ++i) in.tokens[i] = q.tokens[i];
    in.n_tokens = static_cast<int>(q.tokens.size());
    in.n_objects = n;
    in.answer = q.answer_id;
    if (config.tie_answer_head) in.answer_token_ids = ds.answer_token_ids;

    // objects described through the question vocabulary plus their boxes
    in.obj_word_tokens.assign(static_cast<std::size_t>(n_cap) * 2, 0);
    in.obj_boxes.assign(static_cast<std::size_t>(n_cap) * 4, 0.0f);
    for (int i = 0; i < n; ++i) {
        const auto& o = sd.scene.objects[static_cast<std::size_t>(i)];
        in.obj_word_tokens[static_cast<std::size_t>(i) * 2] =
            ds.token_vocab.id(scene::to_string(o.color));
        in.obj_word_tokens[static_cast<std::size_t>(i) * 2 + 1] =
            ds.token_vocab.id(scene::to_string(o.shape));
        const geom::BBox& b = sd.boxes[static_cast<std::size_t>(i)];
        float* row = in.obj_boxes.data() + static_cast<std::size_t>(i) * 4;
        row[0] = static_cast<float>(b.x1);
        row[1] = static_cast<float>(b.y1);
        row[2] = static_cast<float>(b.x2);
        row[3] = static_cast<float>(b.y2);
    }

    const bool need_labels = config.relpos_input != model::RelposInput::none ||
                             config.sr_task != model::SrTask::none;
    if (need_labels) {
        if (!sd.has_labels)
            throw NoData("configuration needs labels but none were loaded for scene " +
                         sd.scene.scene_id);
        if (sd.labels.dims < d)
            throw ConfigError("label files are " + std::to_string(sd.labels.dims) +
                              "D but the model wants " + std::to_string(d) + "D");
    }
    const labels::SRLabels& lab = sd.labels;
    const int n_lab = need_labels ? std::min(n, lab.n) : 0;

    if (config.relpos_input != model::RelposInput::none) {
        const int rd = config.relpos_dim();
        in.relpos.assign(static_cast<std::size_t>(n_cap) * rd, 0.0f);
        for (int k = 0; k < n_lab; ++k) {
            float* row = in.relpos.data() + static_cast<std::size_t>(k) * rd;
            if (config.relpos_full_pairwise) {
                for (int j = 0; j < n_lab; ++j)
                    for (int dd = 0; dd < d; ++dd) row[j * d + dd] = lab.rpe_at(k, j, dd);
            } else {
                for (int dd = 0; dd < d; ++dd) row[dd] = lab.rpe_at(k, 0, dd);
            }
        }
    }

    if (config.use_patches) {
        if (!sd.has_image)
            throw NoData("configuration needs patch features but images were not rendered");
        patches::PyramidConfig pc;
        pc.scales = config.patch_scales;
        pc.overlap = config.patch_overlap;
        pc.include_full = config.patch_include_full;
        pc.patch_side = config.patch_side;
        const patches::PatchPyramid pyr = patches::extract_pyramid(sd.image, pc);
        if (pyr.count() != config.patch_count() || pyr.feature_dim() != config.patch_feat_dim())
            throw ShapeError("patch pyramid does not match the model configuration");
        in.patches = pyr.features;
    }

    if (config.sr_task != model::SrTask::none) {
        in.oce_target.assign(static_cast<std::size_t>(n_cap) * d, 0.0f);
        in.rpe_target.assign(static_cast<std::size_t>(n_cap) * n_cap * d, 0.0f);
        for (int i = 0; i < n_lab; ++i)
            for (int dd = 0; dd < d; ++dd)
                in.oce_target[static_cast<std::size_t>(i) * d + dd] = lab.oce_at(i, dd);
        for (int i = 0; i < n_lab; ++i)
            for (int j = 0; j < n_lab; ++j)
                for (int dd = 0; dd < d; ++dd)
                    in.rpe_target[(static_cast<std::size_t>(i) * n_cap + j) * d + dd] =
                        lab.rpe_at(i, j, dd);
        if (config.sr_mode == model::SrMode::bins) {
            const auto spec_it = lab.bin_specs.find(config.bins);
            const geom::BinSpec spec = spec_it != lab.bin_specs.end()
                                           ? spec_it->second
                                           : geom::make_bin_spec(1.5, config.bins);
            in.oce_bin_target.assign(static_cast<std::size_t>(n_cap) * d, 0);
            in.rpe_bin_target.assign(static_cast<std::size_t>(n_cap) * n_cap * d, 0);
            for (int i = 0; i < n_lab; ++i)
                for (int dd = 0; dd < d; ++dd)
                    in.oce_bin_target[static_cast<std::size_t>(i) * d + dd] =
                        geom::quantize(lab.oce_at(i, dd), spec);
            const auto bins_it = lab.rpe_bins.find(config.bins);
            for (int i = 0; i < n_lab; ++i)
                for (int j = 0; j < n_lab; ++j)
                    for (int dd = 0; dd < d; ++dd)
                        in.rpe_bin_target[(static_cast<std::size_t>(i) * n_cap + j) * d + dd] =
                            bins_it != lab.rpe_bins.end()
                                ? static_cast<int>(lab.bin_at(config.bins, i, j, dd))
                                : geom::quantize(lab.rpe_at(i, j, dd), spec);
        }
    }
    return in;
}

}  // namespace sws::data
