#include "sws/model.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "sws/errors.hpp"
#include "sws/io.hpp"
#include "sws/rng.hpp"

namespace sws::model {

using nlohmann::json;
using nlohmann::ordered_json;
using nn::Graph;
using nn::ParamSet;
using nn::Tensor;
using nn::Var;

namespace {
constexpr std::uint16_t kCheckpointVersion = 1;
}

std::string to_string(SrTask t) {
    switch (t) {
        case SrTask::none: return "none";
        case SrTask::oce: return "oce";
        case SrTask::rpe: return "rpe";
        case SrTask::oce_rpe: return "oce_rpe";
    }
    return "none";
}

std::string to_string(SrMode m) { return m == SrMode::regression ? "regression" : "bins"; }

std::string to_string(RelposInput r) {
    switch (r) {
        case RelposInput::none: return "none";
        case RelposInput::early: return "early";
        case RelposInput::late: return "late";
    }
    return "none";
}

SrTask sr_task_from_string(const std::string& s) {
    if (s == "none") return SrTask::none;
    if (s == "oce") return SrTask::oce;
    if (s == "rpe") return SrTask::rpe;
    if (s == "oce_rpe") return SrTask::oce_rpe;
    throw ConfigError("unknown sr_task: " + s);
}

SrMode sr_mode_from_string(const std::string& s) {
    if (s == "regression") return SrMode::regression;
    if (s == "bins") return SrMode::bins;
    throw ConfigError("unknown sr_mode: " + s);
}

RelposInput relpos_from_string(const std::string& s) {
    if (s == "none") return RelposInput::none;
    if (s == "early") return RelposInput::early;
    if (s == "late") return RelposInput::late;
    throw ConfigError("unknown relpos_input: " + s);
}

int ModelConfig::patch_count() const {
    int p = patch_include_full ? 1 : 0;
    for (int g : patch_scales) p += g * g;
    return p;
}

void ModelConfig::validate() const {
    if (hidden_dim < 1 || heads < 1 || hidden_dim % heads != 0)
        throw ConfigError("hidden_dim must be a positive multiple of heads");
    if (lang_layers < 0 || vis_layers < 0 || cross_layers < 1 || fusion_layers < 1)
        throw ConfigError("encoder needs at least one cross layer and one fusion layer");
    if (ffn_mult < 1) throw ConfigError("ffn_mult must be positive");
    if (max_objects < 1 || max_tokens < 1) throw ConfigError("sequence capacities must be positive");
    if (dims != 2 && dims != 3) throw ConfigError("dims must be 2 or 3");
    if (sr_mode == SrMode::bins && sr_task != SrTask::none &&
        bins != 3 && bins != 7 && bins != 15 && bins != 30)
        throw ConfigError("bin count must be one of 3, 7, 15, 30");
    if (!(alpha > 0.0 && alpha <= 1.0) || !(beta > 0.0 && beta <= 1.0))
        throw ConfigError("alpha and beta must lie in (0, 1]");
    if (use_patches) {
        if (patch_scales.empty() && !patch_include_full)
            throw ConfigError("patch input enabled but the pyramid is empty");
        for (int g : patch_scales)
            if (g < 1) throw ConfigError("patch grid sizes must be positive");
        if (!(patch_overlap >= 0.0 && patch_overlap <= 0.9))
            throw ConfigError("patch overlap must lie in [0, 0.9]");
        if (patch_side < 2) throw ConfigError("patch_side must be at least 2");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (token_vocab < 0 || answer_vocab < 0) throw ConfigError("vocabulary sizes must be non-negative");
}

std::string ModelConfig::to_json() const {
    ordered_json j;
    j["hidden_dim"] = hidden_dim;
    j["heads"] = heads;
    j["lang_layers"] = lang_layers;
    j["vis_layers"] = vis_layers;
    j["cross_layers"] = cross_layers;
    j["fusion_layers"] = fusion_layers;
    j["ffn_mult"] = ffn_mult;
    j["max_objects"] = max_objects;
    j["max_tokens"] = max_tokens;
    j["dims"] = dims;
    j["sr_task"] = model::to_string(sr_task);
    j["sr_mode"] = model::to_string(sr_mode);
    j["bins"] = bins;
    j["relpos_input"] = model::to_string(relpos_input);
    j["relpos_full_pairwise"] = relpos_full_pairwise;
    j["use_patches"] = use_patches;
    j["patch_scales"] = patch_scales;
    j["patch_overlap"] = patch_overlap;
    j["patch_include_full"] = patch_include_full;
    j["patch_side"] = patch_side;
    j["dropout"] = dropout;
    j["tie_answer_head"] = tie_answer_head;
    j["alpha"] = alpha;
    j["beta"] = beta;
    j["token_vocab"] = token_vocab;
    j["answer_vocab"] = answer_vocab;
    j["seed"] = seed;
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& s) {
    json j;
    try {
        j = json::parse(s);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad model config JSON: ") + e.what());
    }
    ModelConfig c;
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.heads = j.value("heads", c.heads);
    c.lang_layers = j.value("lang_layers", c.lang_layers);
    c.vis_layers = j.value("vis_layers", c.vis_layers);
    c.cross_layers = j.value("cross_layers", c.cross_layers);
    c.fusion_layers = j.value("fusion_layers", c.fusion_layers);
    c.ffn_mult = j.value("ffn_mult", c.ffn_mult);
    c.max_objects = j.value("max_objects", c.max_objects);
    c.max_tokens = j.value("max_tokens", c.max_tokens);
    c.dims = j.value("dims", c.dims);
    if (j.contains("sr_task")) c.sr_task = sr_task_from_string(j["sr_task"].get<std::string>());
    if (j.contains("sr_mode")) c.sr_mode = sr_mode_from_string(j["sr_mode"].get<std::string>());
    c.bins = j.value("bins", c.bins);
    if (j.contains("relpos_input"))
        c.relpos_input = relpos_from_string(j["relpos_input"].get<std::string>());
    c.relpos_full_pairwise = j.value("relpos_full_pairwise", c.relpos_full_pairwise);
    c.use_patches = j.value("use_patches", c.use_patches);
    if (j.contains("patch_scales")) c.patch_scales = j["patch_scales"].get<std::vector<int>>();
    c.patch_overlap = j.value("patch_overlap", c.patch_overlap);
    c.patch_include_full = j.value("patch_include_full", c.patch_include_full);
    c.patch_side = j.value("patch_side", c.patch_side);
    c.dropout = j.value("dropout", c.dropout);
    c.tie_answer_head = j.value("tie_answer_head", c.tie_answer_head);
    c.alpha = j.value("alpha", c.alpha);
    c.beta = j.value("beta", c.beta);
    c.token_vocab = j.value("token_vocab", c.token_vocab);
    c.answer_vocab = j.value("answer_vocab", c.answer_vocab);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

std::uint64_t ModelConfig::config_hash() const { return fnv1a64(to_json()); }

// ---------------------------------------------------------------------------
// Parameter construction

namespace {

template <typename T>
Tensor<T> uniform_init(std::size_t rows, std::size_t cols, std::uint64_t seed,
                       const std::string& name, double bound = 0.0) {
    // fan-in scaled uniform by default, seeded per tensor name so the layout
    // of the parameter map cannot change the draw
    Rng rng(Rng(seed).fork(fnv1a64(name)).next_u64());
    if (bound <= 0.0) bound = 1.0 / std::sqrt(static_cast<double>(rows));
    Tensor<T> t(rows, cols);
    for (auto& v : t.data) v = static_cast<T>(rng.uniform(-bound, bound));
    return t;
}

template <typename T>
Tensor<T> ones_row(std::size_t cols) {
    Tensor<T> t(1, cols);
    for (auto& v : t.data) v = T{1};
    return t;
}

template <typename T>
void add_encoder_layer_params(ParamSet<T>& p, const ModelConfig& c, const std::string& prefix) {
    const auto h = static_cast<std::size_t>(c.hidden_dim);
    const auto f = h * static_cast<std::size_t>(c.ffn_mult);
    for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"})
        p[prefix + w] = uniform_init<T>(h, h, c.seed, prefix + w);
    for (const char* b : {"attn.bq", "attn.bv", "attn.bo"})
        p[prefix + b] = Tensor<T>(1, h);
    p[prefix + "ffn.w1"] = uniform_init<T>(h, f, c.seed, prefix + "ffn.w1");
    p[prefix + "ffn.b1"] = Tensor<T>(1, f);
    p[prefix + "ffn.w2"] = uniform_init<T>(f, h, c.seed, prefix + "ffn.w2");
    p[prefix + "ffn.b2"] = Tensor<T>(1, h);
    p[prefix + "ln1.g"] = ones_row<T>(h);
    p[prefix + "ln1.b"] = Tensor<T>(1, h);
    p[prefix + "ln2.g"] = ones_row<T>(h);
    p[prefix + "ln2.b"] = Tensor<T>(1, h);
}

template <typename T>
ParamSet<T> build_params(const ModelConfig& c) {
    if (c.token_vocab < 2 || c.answer_vocab < 2)
        throw ConfigError("model construction requires token and answer vocabularies");
    ParamSet<T> p;
    const auto h = static_cast<std::size_t>(c.hidden_dim);

    p["tok_emb"] = uniform_init<T>(static_cast<std::size_t>(c.token_vocab), h, c.seed, "tok_emb");
    // position/segment embeddings start strong so attention can key on roles
    // and segments from the first updates
    p["pos_text"] = uniform_init<T>(static_cast<std::size_t>(c.max_tokens), h, c.seed, "pos_text", 0.5);
    p["pos_obj"] = uniform_init<T>(static_cast<std::size_t>(c.max_objects), h, c.seed, "pos_obj", 0.5);
    p["cls"] = uniform_init<T>(1, h, c.seed, "cls");
    p["box_proj.w"] = uniform_init<T>(static_cast<std::size_t>(c.obj_box_dim()), h, c.seed, "box_proj.w");
    p["box_proj.b"] = Tensor<T>(1, h);

    for (int i = 0; i < c.lang_layers; ++i)
        add_encoder_layer_params(p, c, "lang" + std::to_string(i) + ".");
    for (int i = 0; i < c.vis_layers; ++i)
        add_encoder_layer_params(p, c, "vis" + std::to_string(i) + ".");
    for (int i = 0; i < c.cross_layers; ++i)
        add_encoder_layer_params(p, c, "cross" + std::to_string(i) + ".");
    for (int i = 0; i < c.fusion_layers; ++i)
        add_encoder_layer_params(p, c, "fus" + std::to_string(i) + ".");

    if (c.use_patches) {
        p["patch_proj.w"] =
            uniform_init<T>(static_cast<std::size_t>(c.patch_feat_dim()), h, c.seed, "patch_proj.w");
        p["patch_proj.b"] = Tensor<T>(1, h);
        p["pos_patch"] =
            uniform_init<T>(static_cast<std::size_t>(c.patch_count()), h, c.seed, "pos_patch", 0.5);
    }
    if (c.relpos_input != RelposInput::none) {
        // loud at init: the distance signal is small against LN-scale rows,
        // and the fusion stack has to notice it within a toy update budget
        p["relpos_proj.w"] = uniform_init<T>(static_cast<std::size_t>(c.relpos_dim()), h, c.seed,
                                             "relpos_proj.w", 2.0);
        p["relpos_proj.b"] = Tensor<T>(1, h);
    }

    if (!c.tie_answer_head)
        p["vqa.w"] = uniform_init<T>(h, static_cast<std::size_t>(c.answer_vocab), c.seed, "vqa.w");
    p["vqa.b"] = Tensor<T>(1, static_cast<std::size_t>(c.answer_vocab));

    const bool wants_reg = c.sr_task != SrTask::none && c.sr_mode == SrMode::regression;
    const bool wants_oce_bins = (c.sr_task == SrTask::oce || c.sr_task == SrTask::oce_rpe) &&
                                c.sr_mode == SrMode::bins;
    const bool wants_rpe_bins = (c.sr_task == SrTask::rpe || c.sr_task == SrTask::oce_rpe) &&
                                c.sr_mode == SrMode::bins;
    if (wants_reg) {
        p["sr_reg.w1"] = uniform_init<T>(h, h, c.seed, "sr_reg.w1");
        p["sr_reg.b1"] = Tensor<T>(1, h);
        p["sr_reg.w2"] = uniform_init<T>(h, static_cast<std::size_t>(c.dims), c.seed, "sr_reg.w2");
        p["sr_reg.b2"] = Tensor<T>(1, static_cast<std::size_t>(c.dims));
    }
    if (wants_oce_bins) {
        const auto out = static_cast<std::size_t>(c.dims * c.bins);
        p["oce_bin.w1"] = uniform_init<T>(h, h, c.seed, "oce_bin.w1");
        p["oce_bin.b1"] = Tensor<T>(1, h);
        p["oce_bin.w2"] = uniform_init<T>(h, out, c.seed, "oce_bin.w2");
        p["oce_bin.b2"] = Tensor<T>(1, out);
    }
    if (wants_rpe_bins) {
        const auto out = static_cast<std::size_t>(c.dims * c.bins);
        p["rpe_bin.w1"] = uniform_init<T>(3 * h, h, c.seed, "rpe_bin.w1");
        p["rpe_bin.b1"] = Tensor<T>(1, h);
        p["rpe_bin.w2"] = uniform_init<T>(h, out, c.seed, "rpe_bin.w2");
        p["rpe_bin.b2"] = Tensor<T>(1, out);
    }
    return p;
}

}  // namespace

template <typename T>
Model<T>::Model(const ModelConfig& config) : config_(config) {
    config_.validate();
    params_ = build_params<T>(config_);
}

template <typename T>
Model<T>::Model(const ModelConfig& config, ParamSet<T> params)
    : config_(config), params_(std::move(params)) {
    config_.validate();
    const ParamSet<T> expected = build_params<T>(config_);
    if (expected.size() != params_.size())
        throw ConfigError("checkpoint parameter set does not match the configuration");
    for (const auto& [name, t] : expected) {
        const auto it = params_.find(name);
        if (it == params_.end()) throw ConfigError("checkpoint is missing parameter " + name);
        if (it->second.rows != t.rows || it->second.cols != t.cols)
            throw ConfigError("checkpoint parameter " + name + " has the wrong shape");
    }
}

template <typename T>
std::map<std::string, Var> Model<T>::register_params(Graph<T>& g, bool requires_grad) const {
    std::map<std::string, Var> vars;
    for (const auto& [name, tensor] : params_) vars[name] = g.input(tensor, requires_grad);
    return vars;
}

// ---------------------------------------------------------------------------
// Forward pieces

namespace {

struct LayerVars {
    nn::AttnVars attn;
    Var ln1_g, ln1_b, ln2_g, ln2_b, ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

LayerVars layer_vars(const std::map<std::string, Var>& vars, const std::string& prefix) {
    return LayerVars{
        nn::AttnVars{vars.at(prefix + "attn.wq"), vars.at(prefix + "attn.bq"),
                     vars.at(prefix + "attn.wk"),
                     vars.at(prefix + "attn.wv"), vars.at(prefix + "attn.bv"),
                     vars.at(prefix + "attn.wo"), vars.at(prefix + "attn.bo")},
        vars.at(prefix + "ln1.g"), vars.at(prefix + "ln1.b"),
        vars.at(prefix + "ln2.g"), vars.at(prefix + "ln2.b"),
        vars.at(prefix + "ffn.w1"), vars.at(prefix + "ffn.b1"),
        vars.at(prefix + "ffn.w2"), vars.at(prefix + "ffn.b2")};
}

template <typename T>
Tensor<T> to_tensor(const std::vector<float>& data, std::size_t rows, std::size_t cols) {
    if (data.size() != rows * cols) throw ShapeError("model input tensor has the wrong size");
    Tensor<T> t(rows, cols);
    for (std::size_t i = 0; i < data.size(); ++i) t.data[i] = static_cast<T>(data[i]);
    return t;
}

}  // namespace

template <typename T>
Var Model<T>::encoder_stack(Graph<T>& g, const std::map<std::string, Var>& vars,
                            const std::string& prefix, int layers, Var x,
                            const std::vector<std::uint8_t>& key_mask) const {
    for (int i = 0; i < layers; ++i) {
        const LayerVars lv = layer_vars(vars, prefix + std::to_string(i) + ".");
        const Var a = nn::multi_head_self_attention(g, x, config_.heads, lv.attn, key_mask);
        x = g.layer_norm(g.add(x, a), lv.ln1_g, lv.ln1_b);
        Var f = g.relu(g.add_rowwise(g.matmul(x, lv.ffn_w1), lv.ffn_b1));
        f = g.add_rowwise(g.matmul(f, lv.ffn_w2), lv.ffn_b2);
        x = g.layer_norm(g.add(x, f), lv.ln2_g, lv.ln2_b);
    }
    return x;
}

template <typename T>
EncoderOutputs Model<T>::encode(Graph<T>& g, const std::map<std::string, Var>& vars,
                                const ModelInputs& in) const {
    const auto n = static_cast<std::size_t>(config_.max_objects);
    const auto l = static_cast<std::size_t>(config_.max_tokens);
    if (in.tokens.size() != l) throw ShapeError("token sequence length does not match the config");
    if (in.n_tokens < 1 || static_cast<std::size_t>(in.n_tokens) > l)
        throw ShapeError("question is empty or longer than max_tokens");
    if (in.n_objects < 1 || static_cast<std::size_t>(in.n_objects) > n)
        throw ShapeError("object count is out of range");
    if (in.obj_word_tokens.size() != 2 * n)
        throw ShapeError("object word tokens must hold (color, shape) per slot");

    std::vector<std::uint8_t> mask_t(l, 0), mask_v(n, 0);
    for (int i = 0; i < in.n_tokens; ++i) mask_t[static_cast<std::size_t>(i)] = 1;
    for (int i = 0; i < in.n_objects; ++i) mask_v[static_cast<std::size_t>(i)] = 1;

    Var t = g.add(g.gather_rows(vars.at("tok_emb"), in.tokens), vars.at("pos_text"));
    t = encoder_stack(g, vars, "lang", config_.lang_layers, t, mask_t);

    std::vector<int> color_ids(n), shape_ids(n);
    for (std::size_t i = 0; i < n; ++i) {
        color_ids[i] = in.obj_word_tokens[2 * i];
        shape_ids[i] = in.obj_word_tokens[2 * i + 1];
    }
    const Var boxes = g.constant(to_tensor<T>(in.obj_boxes, n, 4));
    Var v = g.add(g.add(g.gather_rows(vars.at("tok_emb"), color_ids),
                        g.gather_rows(vars.at("tok_emb"), shape_ids)),
                  g.add(g.add_rowwise(g.matmul(boxes, vars.at("box_proj.w")), vars.at("box_proj.b")),
                        vars.at("pos_obj")));
    v = encoder_stack(g, vars, "vis", config_.vis_layers, v, mask_v);

    std::vector<std::uint8_t> mask_xvt;
    mask_xvt.push_back(1);
    mask_xvt.insert(mask_xvt.end(), mask_v.begin(), mask_v.end());
    mask_xvt.insert(mask_xvt.end(), mask_t.begin(), mask_t.end());
    Var seq = g.concat_rows({vars.at("cls"), v, t});
    seq = encoder_stack(g, vars, "cross", config_.cross_layers, seq, mask_xvt);

    EncoderOutputs out;
    out.x = g.slice_rows(seq, 0, 1);
    out.v = g.slice_rows(seq, 1, 1 + n);
    out.t = g.slice_rows(seq, 1 + n, 1 + n + l);
    return out;
}

template <typename T>
Var Model<T>::project_relpos(Graph<T>& g, const std::map<std::string, Var>& vars,
                             const ModelInputs& in) const {
    if (config_.relpos_input == RelposInput::none)
        throw ConfigError("relative-position input is disabled in this configuration");
    const Var r = g.constant(to_tensor<T>(in.relpos, static_cast<std::size_t>(config_.max_objects),
                                          static_cast<std::size_t>(config_.relpos_dim())));
    return g.add_rowwise(g.matmul(r, vars.at("relpos_proj.w")), vars.at("relpos_proj.b"));
}

std::vector<std::uint8_t> sequence_mask(const ModelConfig& config, const ModelInputs& in) {
    std::vector<std::uint8_t> mask;
    mask.reserve(static_cast<std::size_t>(config.sequence_len()));
    mask.push_back(1);
    for (int i = 0; i < config.max_objects; ++i) mask.push_back(i < in.n_objects);
    for (int i = 0; i < config.max_tokens; ++i) mask.push_back(i < in.n_tokens);
    if (config.use_patches)
        for (int i = 0; i < config.patch_count(); ++i) mask.push_back(1);
    return mask;
}

template <typename T>
FusionOutputs Model<T>::fuse(Graph<T>& g, const std::map<std::string, Var>& vars,
                             const ModelInputs& in, EncoderOutputs enc, Var relpos_proj,
                             bool has_relpos) const {
    const auto n = static_cast<std::size_t>(config_.max_objects);
    const auto l = static_cast<std::size_t>(config_.max_tokens);

    Var v = enc.v;
    if (has_relpos && config_.relpos_input == RelposInput::early) v = g.add(v, relpos_proj);

    std::vector<Var> parts{enc.x, v, enc.t};
    if (config_.use_patches) {
        const Var patch_in = g.constant(to_tensor<T>(
            in.patches, static_cast<std::size_t>(config_.patch_count()),
            static_cast<std::size_t>(config_.patch_feat_dim())));
        const Var p = g.add(
            g.add_rowwise(g.matmul(patch_in, vars.at("patch_proj.w")), vars.at("patch_proj.b")),
            vars.at("pos_patch"));
        parts.push_back(p);
    }

    Var seq = g.concat_rows(parts);
    seq = encoder_stack(g, vars, "fus", config_.fusion_layers, seq, sequence_mask(config_, in));

    FusionOutputs out;
    out.x_hat = g.slice_rows(seq, 0, 1);
    out.v_hat = g.slice_rows(seq, 1, 1 + n);
    out.t_hat = g.slice_rows(seq, 1 + n, 1 + n + l);
    if (config_.use_patches)
        out.p_hat = g.slice_rows(seq, 1 + n + l, 1 + n + l + static_cast<std::size_t>(config_.patch_count()));
    if (has_relpos && config_.relpos_input == RelposInput::late)
        out.v_hat = g.add(out.v_hat, relpos_proj);
    return out;
}

template <typename T>
Var Model<T>::vqa_head(Graph<T>& g, const std::map<std::string, Var>& vars, Var x_hat) const {
    if (!config_.tie_answer_head)
        return g.add_rowwise(g.matmul(x_hat, vars.at("vqa.w")), vars.at("vqa.b"));
    // logits against the answer words' embedding rows
    if (answer_token_ids_.empty())
        throw ConfigError("tied answer head requires answer token ids in the inputs");
    const Var emb = g.gather_rows(vars.at("tok_emb"), answer_token_ids_);
    return g.add_rowwise(g.matmul(x_hat, g.transpose(emb)), vars.at("vqa.b"));
}

template <typename T>
Var Model<T>::sr_reg_head(Graph<T>& g, const std::map<std::string, Var>& vars, Var v_hat) const {
    const Var h1 = g.relu(g.add_rowwise(g.matmul(v_hat, vars.at("sr_reg.w1")), vars.at("sr_reg.b1")));
    return g.sigmoid(g.add_rowwise(g.matmul(h1, vars.at("sr_reg.w2")), vars.at("sr_reg.b2")));
}

template <typename T>
Var Model<T>::sr_bin_head(Graph<T>& g, const std::map<std::string, Var>& vars, Var v_hat,
                          bool pairwise) const {
    const auto n = static_cast<std::size_t>(config_.max_objects);
    const auto c = static_cast<std::size_t>(config_.bins);
    const auto d = static_cast<std::size_t>(config_.dims);
    if (!pairwise) {
        const Var h1 =
            g.relu(g.add_rowwise(g.matmul(v_hat, vars.at("oce_bin.w1")), vars.at("oce_bin.b1")));
        const Var logits = g.add_rowwise(g.matmul(h1, vars.at("oce_bin.w2")), vars.at("oce_bin.b2"));
        return g.reshape(logits, n * d, c);  // rows ordered (object, dim)
    }
    // pair features [v_i ; v_j ; v_i - v_j], rows ordered (i, j) row-major
    const Var vi = g.repeat_each_row(v_hat, n);
    const Var vj = g.tile_rows(v_hat, n);
    const Var pair = g.concat_cols({vi, vj, g.sub(vi, vj)});
    const Var h1 = g.relu(g.add_rowwise(g.matmul(pair, vars.at("rpe_bin.w1")), vars.at("rpe_bin.b1")));
    const Var logits = g.add_rowwise(g.matmul(h1, vars.at("rpe_bin.w2")), vars.at("rpe_bin.b2"));
    return g.reshape(logits, n * n * d, c);
}

template <typename T>
ForwardOutputs Model<T>::forward(Graph<T>& g, const std::map<std::string, Var>& vars,
                                 const ModelInputs& in) const {
    if (config_.tie_answer_head) {
        if (static_cast<int>(in.answer_token_ids.size()) != config_.answer_vocab)
            throw ShapeError("answer token ids must cover the answer vocabulary");
        answer_token_ids_ = in.answer_token_ids;
    }
    const EncoderOutputs enc = encode(g, vars, in);
    const bool has_relpos = config_.relpos_input != RelposInput::none;
    Var relpos_proj{};
    if (has_relpos) relpos_proj = project_relpos(g, vars, in);

    const FusionOutputs fus = fuse(g, vars, in, enc, relpos_proj, has_relpos);

    ForwardOutputs out;
    out.x_hat = fus.x_hat;
    out.v_hat = fus.v_hat;
    out.vqa_logits = vqa_head(g, vars, fus.x_hat);

    const bool task_oce = config_.sr_task == SrTask::oce || config_.sr_task == SrTask::oce_rpe;
    const bool task_rpe = config_.sr_task == SrTask::rpe || config_.sr_task == SrTask::oce_rpe;
    if (config_.sr_task == SrTask::none) return out;

    if (config_.sr_mode == SrMode::regression) {
        out.oce_reg = sr_reg_head(g, vars, fus.v_hat);
        out.has_oce_reg = true;
        if (task_rpe) {
            const auto n = static_cast<std::size_t>(config_.max_objects);
            const Var oi = g.repeat_each_row(out.oce_reg, n);
            const Var oj = g.tile_rows(out.oce_reg, n);
            out.rpe_reg = g.sub(oi, oj);  // antisymmetric by construction
            out.has_rpe_reg = true;
        }
    } else {
        if (task_oce) {
            out.oce_bin_logits = sr_bin_head(g, vars, fus.v_hat, /*pairwise=*/false);
            out.has_oce_bins = true;
        }
        if (task_rpe) {
            out.rpe_bin_logits = sr_bin_head(g, vars, fus.v_hat, /*pairwise=*/true);
            out.has_rpe_bins = true;
        }
    }
    return out;
}

template class Model<float>;
template class Model<double>;

// ---------------------------------------------------------------------------
// Checkpoints

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    ordered_json header;
    header["config"] = ordered_json::parse(ckpt.config.to_json());
    header["config_hash"] = ckpt.config.config_hash();
    header["token_vocab"] = ckpt.token_vocab;
    header["answer_vocab"] = ckpt.answer_vocab;
    header["step"] = ckpt.step;
    header["epoch"] = ckpt.epoch;
    header["dev_vqa_acc"] = ckpt.dev_vqa_acc;
    header["dev_sr_loss"] = ckpt.dev_sr_loss;
    const std::string header_str = header.dump();

    io::Writer w;
    w.str("CKPT");
    w.u16(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(header_str.size()));
    w.str(header_str);
    w.u32(static_cast<std::uint32_t>(ckpt.params.size()));
    for (const auto& [name, t] : ckpt.params) {
        w.u16(static_cast<std::uint16_t>(name.size()));
        w.str(name);
        w.u32(static_cast<std::uint32_t>(t.rows));
        w.u32(static_cast<std::uint32_t>(t.cols));
        for (float v : t.data) w.f32(v);
    }
    io::write_file(path, w.data());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    const auto buf = io::read_file(path);
    io::Reader r(buf);
    if (r.remaining() < 10 || r.str(4) != "CKPT")
        throw IoError("not a checkpoint file: " + path.string());
    const std::uint16_t version = r.u16();
    if (version != kCheckpointVersion)
        throw UnsupportedVersion("checkpoint version " + std::to_string(version) +
                                 " is not supported");
    const auto header = json::parse(r.str(r.u32()));

    Checkpoint ckpt;
    ckpt.config = ModelConfig::from_json(header.at("config").dump());
    ckpt.token_vocab = header.at("token_vocab").get<std::vector<std::string>>();
    ckpt.answer_vocab = header.at("answer_vocab").get<std::vector<std::string>>();
    ckpt.step = header.at("step").get<std::int64_t>();
    ckpt.epoch = header.at("epoch").get<int>();
    ckpt.dev_vqa_acc = header.at("dev_vqa_acc").get<double>();
    ckpt.dev_sr_loss = header.at("dev_sr_loss").get<double>();

    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = r.str(r.u16());
        const std::uint32_t rows = r.u32();
        const std::uint32_t cols = r.u32();
        Tensor<float> t(rows, cols);
        for (auto& v : t.data) v = r.f32();
        ckpt.params[name] = std::move(t);
    }
    if (r.remaining() != 0) throw IoError("trailing bytes in checkpoint " + path.string());
    return ckpt;
}

}  // namespace sws::model
