#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sws/labels.hpp"
#include "sws/model.hpp"
#include "sws/scenegen.hpp"

namespace sws::data {

std::vector<std::string> tokenize(const std::string& text);

/// Question-word vocabulary. Index 0 is the pad token, 1 the unknown token.
struct Vocab {
    std::vector<std::string> words;
    std::map<std::string, int> index;

    int id(const std::string& word) const;
    int size() const { return static_cast<int>(words.size()); }

    static Vocab from_words(std::vector<std::string> words);
    /// Pad/unk plus the sorted unique tokens of the given texts and extras.
    static Vocab build(const std::vector<std::string>& texts,
                       const std::vector<std::string>& extra_words = {});
};

struct SceneData {
    scene::Scene scene;
    std::vector<geom::BBox> boxes;       // normalized, object order
    labels::SRLabels labels;             // loaded when the run needs them
    bool has_labels = false;
    scene::Image image;                  // rendered once when patches are used
    bool has_image = false;
};

struct Question {
    scene::QAItem item;
    int scene_idx = -1;
    std::vector<int> tokens;
    int answer_id = -1;
    int subject_idx = -1;
    int object_idx = -1;
};

struct Dataset {
    std::filesystem::path data_dir;
    std::vector<SceneData> scenes;
    std::map<std::string, int> scene_index;
    std::vector<Question> questions;
    std::map<std::string, int> question_index;
    scene::SplitSet splits;
    Vocab token_vocab;
    std::vector<std::string> answer_vocab;
    std::map<std::string, int> answer_index;
    std::vector<int> answer_token_ids;  // answer index -> token id

    const std::vector<std::string>& split_ids(const std::string& name) const;
    /// Question indexes for a named split ("train", "dev", "test_iid", "test_ood").
    std::vector<int> split_questions(const std::string& name) const;
};

/// Loads a generated dataset directory (meta.json, scenes/, qa.jsonl,
/// splits.json) plus label files when needed. The token vocabulary is built
/// from the training split only. Images are rendered when `need_images`.
Dataset load_dataset(const std::filesystem::path& data_dir,
                     const std::filesystem::path& labels_dir, bool need_labels, bool need_images);

/// Pads one question into fixed-shape model inputs (tokens, object features
/// with boxes, relative-position rows, patch features, SR targets).
model::ModelInputs assemble(const Dataset& ds, const model::ModelConfig& config, int question_idx);

}  // namespace sws::data
