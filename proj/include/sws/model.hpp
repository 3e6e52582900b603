#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sws/nnkit/adam.hpp"
#include "sws/nnkit/graph.hpp"
#include "sws/scenegen.hpp"

namespace sws::model {

enum class SrTask { none, oce, rpe, oce_rpe };
enum class SrMode { regression, bins };
enum class RelposInput { none, early, late };

std::string to_string(SrTask t);
std::string to_string(SrMode m);
std::string to_string(RelposInput r);
SrTask sr_task_from_string(const std::string& s);
SrMode sr_mode_from_string(const std::string& s);
RelposInput relpos_from_string(const std::string& s);

struct ModelConfig {
    int hidden_dim = 64;
    int heads = 4;
    int lang_layers = 2;
    int vis_layers = 2;
    int cross_layers = 2;
    int fusion_layers = 2;
    int ffn_mult = 2;
    int max_objects = 8;   // N
    int max_tokens = 16;   // L
    int dims = 3;          // D
    SrTask sr_task = SrTask::rpe;
    SrMode sr_mode = SrMode::bins;
    int bins = 15;  // C, used when sr_mode == bins
    RelposInput relpos_input = RelposInput::early;
    /// Off: object k's relative-position input row is its distance vector to
    /// object 0 (N x D). On: the full pairwise block per object (N x N*D).
    bool relpos_full_pairwise = false;
    bool use_patches = true;
    std::vector<int> patch_scales{3, 5, 7};
    double patch_overlap = 0.5;
    bool patch_include_full = true;
    int patch_side = 16;
    double dropout = 0.0;
    /// Tie the answer head to the token embedding rows of the answer words
    /// (answers are drawn from the question vocabulary).
    bool tie_answer_head = true;
    double alpha = 0.7;
    double beta = 0.3;
    int token_vocab = 0;   // 0 = filled in from the dataset
    int answer_vocab = 0;
    std::uint64_t seed = 1;

    int obj_box_dim() const { return 4; }
    int patch_count() const;
    int patch_feat_dim() const { return patch_side * patch_side * 3; }
    int relpos_dim() const { return relpos_full_pairwise ? max_objects * dims : dims; }
    int sequence_len() const {
        return 1 + max_objects + max_tokens + (use_patches ? patch_count() : 0);
    }

    void validate() const;
    std::string to_json() const;
    static ModelConfig from_json(const std::string& s);
    std::uint64_t config_hash() const;
};

/// One assembled example, already padded to the config's fixed shapes.
/// Objects are described through the question vocabulary (color and shape
/// word ids) so text and vision share one embedding space, standing in for a
/// pretrained encoder's word-object alignment; the box coordinates are
/// appended through a learned projection.
struct ModelInputs {
    std::vector<int> tokens;          // max_tokens, pad id 0
    int n_tokens = 0;
    int n_objects = 0;
    std::vector<int> obj_word_tokens; // max_objects x 2 (color id, shape id)
    std::vector<float> obj_boxes;     // max_objects x 4
    std::vector<float> relpos;    // max_objects x relpos_dim (when configured)
    std::vector<float> patches;   // patch_count x patch_feat_dim (when configured)

    int answer = -1;
    std::vector<int> answer_token_ids;  // answer index -> token id (tied head)
    std::vector<float> oce_target;     // max_objects x dims
    std::vector<float> rpe_target;     // max_objects^2 x dims
    std::vector<int> oce_bin_target;   // max_objects * dims
    std::vector<int> rpe_bin_target;   // max_objects^2 * dims
};

struct EncoderOutputs {
    nn::Var x;  // 1 x H cross-modal summary
    nn::Var v;  // N x H
    nn::Var t;  // L x H
};

struct FusionOutputs {
    nn::Var x_hat;
    nn::Var v_hat;
    nn::Var t_hat;
    nn::Var p_hat;  // invalid when patches are off
};

/// Everything a head produced for one example; Vars live as long as the
/// graph that built them.
struct ForwardOutputs {
    nn::Var vqa_logits;       // 1 x answer_vocab
    nn::Var x_hat;
    nn::Var v_hat;
    nn::Var oce_reg;          // N x D sigmoid outputs (regression tasks)
    nn::Var rpe_reg;          // N^2 x D pairwise differences (exact antisymmetry)
    nn::Var oce_bin_logits;   // (N*D) x C
    nn::Var rpe_bin_logits;   // (N^2*D) x C
    bool has_oce_reg = false;
    bool has_rpe_reg = false;
    bool has_oce_bins = false;
    bool has_rpe_bins = false;
};

template <typename T>
class Model {
public:
    explicit Model(const ModelConfig& config);                 // seeded init
    Model(const ModelConfig& config, nn::ParamSet<T> params);  // from checkpoint

    const ModelConfig& config() const { return config_; }
    nn::ParamSet<T>& params() { return params_; }
    const nn::ParamSet<T>& params() const { return params_; }

    /// Registers every parameter as a graph input. Gradients are collected
    /// per name after backward.
    std::map<std::string, nn::Var> register_params(nn::Graph<T>& g, bool requires_grad) const;

    // Architecture pieces, exposed for targeted tests. `vars` must come from
    // register_params on the same graph.
    EncoderOutputs encode(nn::Graph<T>& g, const std::map<std::string, nn::Var>& vars,
                          const ModelInputs& in) const;
    nn::Var project_relpos(nn::Graph<T>& g, const std::map<std::string, nn::Var>& vars,
                           const ModelInputs& in) const;
    FusionOutputs fuse(nn::Graph<T>& g, const std::map<std::string, nn::Var>& vars,
                       const ModelInputs& in, EncoderOutputs enc, nn::Var relpos_proj,
                       bool has_relpos) const;
    nn::Var vqa_head(nn::Graph<T>& g, const std::map<std::string, nn::Var>& vars, nn::Var x_hat) const;
    nn::Var sr_reg_head(nn::Graph<T>& g, const std::map<std::string, nn::Var>& vars, nn::Var v_hat) const;
    nn::Var sr_bin_head(nn::Graph<T>& g, const std::map<std::string, nn::Var>& vars, nn::Var v_hat,
                        bool pairwise) const;

    ForwardOutputs forward(nn::Graph<T>& g, const std::map<std::string, nn::Var>& vars,
                           const ModelInputs& in) const;

private:
    nn::Var encoder_stack(nn::Graph<T>& g, const std::map<std::string, nn::Var>& vars,
                          const std::string& prefix, int layers, nn::Var x,
                          const std::vector<std::uint8_t>& key_mask) const;

    ModelConfig config_;
    nn::ParamSet<T> params_;
    mutable std::vector<int> answer_token_ids_;  // set per forward when tied
};

/// Key mask over the fused sequence [x, v, t, p] for one example.
std::vector<std::uint8_t> sequence_mask(const ModelConfig& config, const ModelInputs& in);

struct Checkpoint {
    ModelConfig config;
    std::vector<std::string> token_vocab;
    std::vector<std::string> answer_vocab;
    std::int64_t step = 0;
    int epoch = 0;
    double dev_vqa_acc = 0.0;
    double dev_sr_loss = 0.0;
    nn::ParamSet<float> params;
};

// Checkpoint container: magic "CKPT", u16 version, u32 header length, JSON
// header (config, vocabularies, counters, config hash), then named f32
// tensors.
void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace sws::model
