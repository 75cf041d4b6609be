#include "shipvl/fusion/model.hpp"

#include <cmath>

#include "shipvl/error.hpp"
#include "shipvl/fusion/tokenizer.hpp"
#include "shipvl/rng.hpp"

namespace shipvl::fusion {

namespace {

Mat gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols, double mean, double stddev) {
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(mean, stddev);
    return m;
}

Mat silu(const Mat& g) { return (g.array() / (1.0 + (-g.array()).exp())).matrix(); }

// d/dg [g * sigmoid(g)] = sigmoid(g) * (1 + g * (1 - sigmoid(g)))
Mat silu_grad(const Mat& g) {
    const auto s = 1.0 / (1.0 + (-g.array()).exp());
    return (s * (1.0 + g.array() * (1.0 - s))).matrix();
}

void softmax_rows(Mat& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        auto row = m.row(i);
        row.array() = (row.array() - row.maxCoeff()).exp();
        row /= row.sum();
    }
}

// Row i attends to columns 0..i; masked entries are written as exact zeros.
void softmax_causal_rows(Mat& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        auto head = m.row(i).head(i + 1);
        head.array() = (head.array() - head.maxCoeff()).exp();
        head /= head.sum();
        m.row(i).tail(m.cols() - i - 1).setZero();
    }
}

const char* const kLinearNames[] = {"attn.q", "attn.k", "attn.v", "attn.o", "ffn.gate", "ffn.up", "ffn.down"};

}  // namespace

int ToyModelConfig::visual_tokens() const {
    int n = 0;
    for (int s = 0; s < scales_a; ++s) n += visual_tokens_per_scale(s);
    return n;
}

void ToyModelConfig::validate() const {
    auto require = [](bool ok, const char* what) {
        if (!ok) fail(ErrorCode::InvalidArgument, std::string("invalid model config: ") + what);
    };
    require(model_dim > 0 && heads > 0 && total_layers > 0 && lora_rank > 0, "sizes must be positive");
    require(model_dim % heads == 0, "model_dim must be divisible by heads");
    require(lora_layers >= 0 && lora_layers <= total_layers, "lora_layers must be within [0, total_layers]");
    require(lora_alpha > 0.0, "lora_alpha must be positive");
    require(scales_a >= 1 && scales_b >= 1, "scale counts must be at least 1");
    require(patch > 0 && encoder_channels > 0 && ffn_mult > 0, "encoder sizes must be positive");
    require(visual_tokens_per_scale(scales_a - 1) > 0 && visual_tokens_per_scale(scales_b - 1) > 0,
            "coarsest pyramid level is smaller than one patch");
    int n_b = 0;
    for (int s = 0; s < scales_b; ++s) n_b += visual_tokens_per_scale(s);
    require(n_b == visual_tokens(), "both backbones must yield the same token count");
    require(max_seq > visual_tokens() + 2, "max_seq too small for the visual prefix");
    require(max_answer_len > 0, "max_answer_len must be positive");
    require(scale_init_std >= 0.0, "scale_init_std must be non-negative");
}

nlohmann::json ToyModelConfig::to_json() const {
    return {
        {"model_dim", model_dim},
        {"heads", heads},
        {"total_layers", total_layers},
        {"lora_layers", lora_layers},
        {"lora_rank", lora_rank},
        {"lora_alpha", lora_alpha},
        {"scales_a", scales_a},
        {"scales_b", scales_b},
        {"image_size", image_size},
        {"patch", patch},
        {"encoder_channels", encoder_channels},
        {"ffn_mult", ffn_mult},
        {"max_seq", max_seq},
        {"max_answer_len", max_answer_len},
        {"scale_init_mean", scale_init_mean},
        {"scale_init_std", scale_init_std},
        {"seed", seed},
    };
}

ToyModelConfig ToyModelConfig::from_json(const nlohmann::json& j) {
    ToyModelConfig c;
    if (!j.is_object()) fail(ErrorCode::FormatError, "model config must be a JSON object");
    auto get = [&j](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    try {
        get("model_dim", c.model_dim);
        get("heads", c.heads);
        get("total_layers", c.total_layers);
        get("lora_layers", c.lora_layers);
        get("lora_rank", c.lora_rank);
        get("lora_alpha", c.lora_alpha);
        get("scales_a", c.scales_a);
        get("scales_b", c.scales_b);
        get("image_size", c.image_size);
        get("patch", c.patch);
        get("encoder_channels", c.encoder_channels);
        get("ffn_mult", c.ffn_mult);
        get("max_seq", c.max_seq);
        get("max_answer_len", c.max_answer_len);
        get("scale_init_mean", c.scale_init_mean);
        get("scale_init_std", c.scale_init_std);
        get("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::FormatError, std::string("model config: ") + e.what());
    }
    c.validate();
    return c;
}

std::string_view to_string(ParamClass c) noexcept {
    switch (c) {
        case ParamClass::base: return "base";
        case ParamClass::embedding: return "embedding";
        case ParamClass::positional: return "positional";
        case ParamClass::projection: return "projection";
        case ParamClass::lora_down: return "lora_down";
        case ParamClass::lora_up: return "lora_up";
        case ParamClass::bias: return "bias";
        case ParamClass::scale: return "scale";
    }
    return "base";
}

ParamClass parse_param_class(std::string_view text) {
    for (ParamClass c : {ParamClass::base, ParamClass::embedding, ParamClass::positional, ParamClass::projection,
                         ParamClass::lora_down, ParamClass::lora_up, ParamClass::bias, ParamClass::scale}) {
        if (to_string(c) == text) return c;
    }
    fail(ErrorCode::FormatError, "unknown parameter class '" + std::string(text) + "'");
}

ParamClassSet all_trainable_classes() {
    return {ParamClass::embedding, ParamClass::positional, ParamClass::projection, ParamClass::lora_down,
            ParamClass::lora_up,   ParamClass::bias,       ParamClass::scale};
}

struct ToyModel::ForwardState {
    struct Block {
        Mat x_in;
        Vec r1;
        Mat h1;
        LinearCache q, k, v, o, gate, up, down;
        Mat qm, km, vm;
        std::vector<Mat> probs;
        Mat x_mid;
        Vec r2;
        Mat h2;
        Mat g, u;
    };
    int n_visual = 0;
    std::vector<Block> blocks;
    Vec rf;
    Mat hf;
};

ToyModel::ToyModel(const ToyModelConfig& config)
    : config_((config.validate(), config)),
      encoder_a_(Backbone::A, config.patch, config.encoder_channels, Rng(config.seed).next()),
      encoder_b_(Backbone::B, config.patch, config.encoder_channels, Rng(config.seed ^ 0x9e3779b97f4a7c15ULL).next()) {
    const int d = config_.model_dim;
    const int hidden = config_.ffn_mult * d;
    const int vocab = Tokenizer::standard().size();
    const double two_l = std::sqrt(2.0 * config_.total_layers);
    Rng rng(config_.seed + 1);

    embedding_ = add_param("embedding", ParamClass::embedding, gaussian(rng, vocab, d, 0.0, 0.02));
    positional_ = add_param("positional", ParamClass::positional, gaussian(rng, config_.max_seq, d, 0.0, 0.02));
    const int fused_dim = 2 * config_.encoder_channels;
    proj_weight_ = add_param("projection.weight", ParamClass::projection,
                             gaussian(rng, d, fused_dim, 0.0, 1.0 / std::sqrt(static_cast<double>(fused_dim))));
    proj_bias_ = add_param("projection.bias", ParamClass::projection, Mat::Zero(1, d));

    const double sd = 1.0 / std::sqrt(static_cast<double>(d));
    const int first_adapted = config_.total_layers - config_.lora_layers;
    for (int l = 0; l < config_.total_layers; ++l) {
        const std::string prefix = "blocks." + std::to_string(l) + ".";
        BlockSlots b;
        b.q.weight = add_param(prefix + "attn.q.weight", ParamClass::base, gaussian(rng, d, d, 0.0, sd));
        b.k.weight = add_param(prefix + "attn.k.weight", ParamClass::base, gaussian(rng, d, d, 0.0, sd));
        b.v.weight = add_param(prefix + "attn.v.weight", ParamClass::base, gaussian(rng, d, d, 0.0, sd));
        b.o.weight = add_param(prefix + "attn.o.weight", ParamClass::base, gaussian(rng, d, d, 0.0, sd / two_l));
        b.gate.weight = add_param(prefix + "ffn.gate.weight", ParamClass::base, gaussian(rng, hidden, d, 0.0, sd));
        b.up.weight = add_param(prefix + "ffn.up.weight", ParamClass::base, gaussian(rng, hidden, d, 0.0, sd));
        b.down.weight = add_param(prefix + "ffn.down.weight", ParamClass::base,
                                  gaussian(rng, d, hidden, 0.0, 1.0 / std::sqrt(static_cast<double>(hidden)) / two_l));
        if (l >= first_adapted) {
            LinearSlots* adapted[] = {&b.q, &b.k, &b.v, &b.o};
            const char* names[] = {"attn.q", "attn.k", "attn.v", "attn.o"};
            for (int i = 0; i < 4; ++i) {
                adapted[i]->down = add_param(prefix + names[i] + ".lora_down", ParamClass::lora_down,
                                             gaussian(rng, config_.lora_rank, d, 0.0, sd));
                adapted[i]->up = add_param(prefix + names[i] + ".lora_up", ParamClass::lora_up,
                                           Mat::Zero(d, config_.lora_rank));
            }
        }
        blocks_.push_back(b);
    }
}

int ToyModel::add_param(std::string name, ParamClass cls, Mat value) {
    params_.push_back({std::move(name), cls, std::move(value)});
    return static_cast<int>(params_.size() - 1);
}

std::optional<std::size_t> ToyModel::find_parameter(std::string_view name) const {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (params_[i].name == name) return i;
    }
    return std::nullopt;
}

const Mat& ToyModel::parameter(std::string_view name) const {
    const auto i = find_parameter(name);
    if (!i) fail(ErrorCode::InvalidArgument, "no parameter named '" + std::string(name) + "'");
    return params_[*i].value;
}

Mat& ToyModel::parameter(std::string_view name) {
    return const_cast<Mat&>(static_cast<const ToyModel&>(*this).parameter(name));
}

std::size_t ToyModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
}

std::size_t ToyModel::parameter_count(const ParamClassSet& classes) const {
    std::size_t n = 0;
    for (const auto& p : params_) {
        if (classes.count(p.cls)) n += static_cast<std::size_t>(p.value.size());
    }
    return n;
}

void ToyModel::enable_bias_scale(std::uint64_t seed) {
    if (bias_scale_) return;
    Rng rng(seed);
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
        BlockSlots& b = blocks_[l];
        LinearSlots* slots[] = {&b.q, &b.k, &b.v, &b.o, &b.gate, &b.up, &b.down};
        for (int i = 0; i < 7; ++i) {
            const std::string prefix = "blocks." + std::to_string(l) + "." + kLinearNames[i];
            const Eigen::Index out = params_[slots[i]->weight].value.rows();
            slots[i]->bias = add_param(prefix + ".bias", ParamClass::bias, Mat::Zero(1, out));
            slots[i]->scale = add_param(prefix + ".scale", ParamClass::scale,
                                        gaussian(rng, 1, out, config_.scale_init_mean, config_.scale_init_std));
        }
    }
    bias_scale_ = true;
}

LinearView ToyModel::view(const LinearSlots& s, bool use_lora) const {
    LinearView v;
    v.weight = &params_[s.weight].value;
    if (use_lora && s.down >= 0) {
        v.down = &params_[s.down].value;
        v.up = &params_[s.up].value;
        v.lora_scale = config_.lora_alpha / config_.lora_rank;
    }
    if (s.bias >= 0) {
        v.bias = &params_[s.bias].value;
        v.scale = &params_[s.scale].value;
    }
    return v;
}

LinearGrads ToyModel::grad_sinks(const LinearSlots& s, Gradients& g) const {
    auto sink = [&g](int idx) -> Mat* {
        return idx >= 0 && g.has(static_cast<std::size_t>(idx)) ? &g.values[idx] : nullptr;
    };
    return {sink(s.down), sink(s.up), sink(s.bias), sink(s.scale)};
}

std::vector<FeatureTokens> ToyModel::encode_backbone(const GrayImage& image, Backbone backbone) const {
    if (backbone == Backbone::A) return encode_image_multiscale(image, encoder_a_, config_.scales_a, config_.image_size);
    return encode_image_multiscale(image, encoder_b_, config_.scales_b, config_.image_size);
}

VisualFeatures ToyModel::encode(const GrayImage& image) const {
    const Mat f = concat_scales(encode_backbone(image, Backbone::A));
    const Mat g = concat_scales(encode_backbone(image, Backbone::B));
    VisualFeatures out;
    out.fused.resize(f.rows(), f.cols() + g.cols());
    out.fused << f, g;
    return out;
}

Mat ToyModel::fuse_and_project(const Mat& f_v, const Mat& g_v) const {
    if (f_v.rows() != g_v.rows()) fail(ErrorCode::ShapeMismatch, "F_v and G_v token counts differ");
    VisualFeatures v;
    v.fused.resize(f_v.rows(), f_v.cols() + g_v.cols());
    v.fused << f_v, g_v;
    return project(v);
}

Mat ToyModel::project(const VisualFeatures& visual) const {
    const Mat& w = params_[proj_weight_].value;
    if (visual.fused.cols() != w.cols()) fail(ErrorCode::ShapeMismatch, "fused feature width does not match projection");
    Mat p = visual.fused * w.transpose();
    p.rowwise() += params_[proj_bias_].value.row(0);
    return p;
}

Mat ToyModel::embed_tokens(std::span<const int> ids) const {
    const Mat& e = params_[embedding_].value;
    Mat out(static_cast<Eigen::Index>(ids.size()), e.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= e.rows()) fail(ErrorCode::InvalidArgument, "token id out of range");
        out.row(static_cast<Eigen::Index>(i)) = e.row(ids[i]);
    }
    return out;
}

MultiModalSequence assemble_multimodal(const Mat& p_v, const Mat& p_l) {
    if (p_l.rows() == 0) fail(ErrorCode::ShapeMismatch, "language token set is empty");
    if (p_v.cols() != p_l.cols()) fail(ErrorCode::ShapeMismatch, "visual and language tokens differ in width");
    MultiModalSequence seq;
    seq.tokens.resize(p_v.rows() + p_l.rows(), p_v.cols());
    seq.tokens << p_v, p_l;
    seq.n_visual = static_cast<int>(p_v.rows());
    seq.n_language = static_cast<int>(p_l.rows());
    return seq;
}

namespace {

struct AttentionCaches {
    LinearCache* q = nullptr;
    LinearCache* k = nullptr;
    LinearCache* v = nullptr;
    LinearCache* o = nullptr;
    Mat* qm = nullptr;
    Mat* km = nullptr;
    Mat* vm = nullptr;
};

Mat attend(const Mat& h, const LinearView& q_view, const LinearView& k_view, const LinearView& v_view,
           const LinearView& o_view, int heads, std::vector<Mat>* probs, const AttentionCaches& c) {
    const Eigen::Index t = h.rows();
    const int dk = static_cast<int>(h.cols()) / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
    Mat q = linear_forward(q_view, h, c.q);
    Mat k = linear_forward(k_view, h, c.k);
    Mat v = linear_forward(v_view, h, c.v);
    Mat att(t, h.cols());
    if (probs) probs->assign(static_cast<std::size_t>(heads), Mat());
    for (int hd = 0; hd < heads; ++hd) {
        Mat s = q.middleCols(hd * dk, dk) * k.middleCols(hd * dk, dk).transpose() * inv_sqrt;
        softmax_causal_rows(s);
        att.middleCols(hd * dk, dk).noalias() = s * v.middleCols(hd * dk, dk);
        if (probs) (*probs)[static_cast<std::size_t>(hd)] = std::move(s);
    }
    if (c.qm) *c.qm = std::move(q);
    if (c.km) *c.km = std::move(k);
    if (c.vm) *c.vm = std::move(v);
    return linear_forward(o_view, att, c.o);
}

}  // namespace

Mat ToyModel::attention_forward(const Mat& x, int layer, bool adapted, AttentionTrace* trace) const {
    if (layer < 0 || layer >= static_cast<int>(blocks_.size())) fail(ErrorCode::InvalidArgument, "layer out of range");
    if (x.cols() != config_.model_dim) fail(ErrorCode::ShapeMismatch, "attention input width must equal model_dim");
    const BlockSlots& b = blocks_[static_cast<std::size_t>(layer)];
    return attend(x, view(b.q, adapted), view(b.k, adapted), view(b.v, adapted), view(b.o, adapted), config_.heads,
                  trace ? &trace->probabilities : nullptr, {});
}

Mat ToyModel::run(const VisualFeatures& visual, std::span<const int> ids, bool use_lora, ForwardState* state) const {
    const MultiModalSequence seq = assemble_multimodal(project(visual), embed_tokens(ids));
    const Eigen::Index t = seq.tokens.rows();
    if (t > config_.max_seq) {
        fail(ErrorCode::ShapeMismatch,
             "sequence length " + std::to_string(t) + " exceeds max_seq " + std::to_string(config_.max_seq));
    }
    Mat x = seq.tokens + params_[positional_].value.topRows(t);
    if (state) {
        state->n_visual = seq.n_visual;
        state->blocks.assign(blocks_.size(), {});
    }
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
        const BlockSlots& b = blocks_[l];
        ForwardState::Block* s = state ? &state->blocks[l] : nullptr;
        Vec r1;
        Mat h1 = rms_norm(x, &r1);
        AttentionCaches caches;
        if (s) caches = {&s->q, &s->k, &s->v, &s->o, &s->qm, &s->km, &s->vm};
        const Mat att = attend(h1, view(b.q, use_lora), view(b.k, use_lora), view(b.v, use_lora), view(b.o, use_lora),
                               config_.heads, s ? &s->probs : nullptr, caches);
        Mat x_mid = x + att;
        Vec r2;
        Mat h2 = rms_norm(x_mid, &r2);
        Mat g = linear_forward(view(b.gate, use_lora), h2, s ? &s->gate : nullptr);
        Mat u = linear_forward(view(b.up, use_lora), h2, s ? &s->up : nullptr);
        const Mat a = (silu(g).array() * u.array()).matrix();
        Mat x_out = x_mid + linear_forward(view(b.down, use_lora), a, s ? &s->down : nullptr);
        if (s) {
            s->x_in = std::move(x);
            s->r1 = std::move(r1);
            s->h1 = std::move(h1);
            s->x_mid = std::move(x_mid);
            s->r2 = std::move(r2);
            s->h2 = std::move(h2);
            s->g = std::move(g);
            s->u = std::move(u);
        }
        x = std::move(x_out);
    }
    Vec rf;
    Mat hf = rms_norm(x, &rf);
    if (state) {
        state->rf = rf;
        state->hf = hf;
    }
    return hf;
}

Mat ToyModel::forward(const VisualFeatures& visual, std::span<const int> language_ids) const {
    return run(visual, language_ids, true, nullptr) * params_[embedding_].value.transpose();
}

Mat ToyModel::forward(const GrayImage& image, std::string_view instruction) const {
    const Tokenizer& tok = Tokenizer::standard();
    std::vector<int> ids{tok.bos()};
    const auto instr = tok.encode(instruction);
    ids.insert(ids.end(), instr.begin(), instr.end());
    ids.push_back(tok.sep());
    return forward(encode(image), ids);
}

Mat ToyModel::forward_unadapted(const VisualFeatures& visual, std::span<const int> language_ids) const {
    return run(visual, language_ids, false, nullptr) * params_[embedding_].value.transpose();
}

std::vector<int> ToyModel::language_ids(const TrainingExample& ex) {
    const Tokenizer& tok = Tokenizer::standard();
    std::vector<int> ids;
    ids.reserve(ex.instruction.size() + ex.answer.size() + 2);
    ids.push_back(tok.bos());
    ids.insert(ids.end(), ex.instruction.begin(), ex.instruction.end());
    ids.push_back(tok.sep());
    ids.insert(ids.end(), ex.answer.begin(), ex.answer.end());
    return ids;
}

TrainingExample ToyModel::make_example(const GrayImage& image, std::string_view instruction,
                                       std::string_view answer) const {
    const Tokenizer& tok = Tokenizer::standard();
    return {encode(image), tok.encode(instruction), tok.encode(answer)};
}

double ToyModel::loss_and_grads(std::span<const TrainingExample> batch, const ParamClassSet& trainable,
                                Gradients* grads) const {
    if (batch.empty()) fail(ErrorCode::EmptyBatch, "loss requested on an empty batch");
    if (grads) {
        grads->classes = trainable;
        grads->values.assign(params_.size(), Mat());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            if (trainable.count(params_[i].cls)) grads->values[i] = Mat::Zero(params_[i].value.rows(), params_[i].value.cols());
        }
    }
    const Tokenizer& tok = Tokenizer::standard();
    const Mat& emb = params_[embedding_].value;
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;

    for (const TrainingExample& ex : batch) {
        const std::vector<int> ids = language_ids(ex);
        std::vector<int> targets(ex.answer);
        targets.push_back(tok.eos());
        const Eigen::Index n_targets = static_cast<Eigen::Index>(targets.size());

        ForwardState st;
        run(ex.visual, ids, true, &st);
        const Eigen::Index first = st.n_visual + 1 + static_cast<Eigen::Index>(ex.instruction.size());
        const Mat hsel = st.hf.middleRows(first, n_targets);
        Mat probs = hsel * emb.transpose();
        softmax_rows(probs);
        double sample = 0.0;
        for (Eigen::Index i = 0; i < n_targets; ++i) sample -= std::log(probs(i, targets[static_cast<std::size_t>(i)]));
        total += sample / static_cast<double>(n_targets) * inv_batch;
        if (!grads) continue;

        Mat dlogits = probs;
        for (Eigen::Index i = 0; i < n_targets; ++i) dlogits(i, targets[static_cast<std::size_t>(i)]) -= 1.0;
        dlogits *= inv_batch / static_cast<double>(n_targets);

        Gradients& g = *grads;
        Mat* d_emb = g.has(embedding_) ? &g.values[embedding_] : nullptr;
        if (d_emb) d_emb->noalias() += dlogits.transpose() * hsel;

        Mat dhf = Mat::Zero(st.hf.rows(), st.hf.cols());
        dhf.middleRows(first, n_targets).noalias() = dlogits * emb;
        Mat dx = rms_norm_backward(st.hf, st.rf, dhf);

        for (std::size_t li = blocks_.size(); li-- > 0;) {
            const BlockSlots& b = blocks_[li];
            const ForwardState::Block& s = st.blocks[li];

            const Mat da = linear_backward(view(b.down), s.down, dx, grad_sinks(b.down, g));
            const Mat dg = (da.array() * s.u.array() * silu_grad(s.g).array()).matrix();
            const Mat du = (da.array() * silu(s.g).array()).matrix();
            Mat dh2 = linear_backward(view(b.gate), s.gate, dg, grad_sinks(b.gate, g));
            dh2 += linear_backward(view(b.up), s.up, du, grad_sinks(b.up, g));
            Mat dx_mid = dx + rms_norm_backward(s.h2, s.r2, dh2);

            const Mat datt = linear_backward(view(b.o), s.o, dx_mid, grad_sinks(b.o, g));
            const int dk = config_.head_dim();
            const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
            Mat dq(datt.rows(), datt.cols());
            Mat dkm(datt.rows(), datt.cols());
            Mat dv(datt.rows(), datt.cols());
            for (int hd = 0; hd < config_.heads; ++hd) {
                const Mat& p = s.probs[static_cast<std::size_t>(hd)];
                const auto datt_h = datt.middleCols(hd * dk, dk);
                const Mat dp = datt_h * s.vm.middleCols(hd * dk, dk).transpose();
                dv.middleCols(hd * dk, dk).noalias() = p.transpose() * datt_h;
                const Vec rowdot = (dp.array() * p.array()).rowwise().sum();
                Mat ds = p.array() * (dp.array().colwise() - rowdot.array());
                ds *= inv_sqrt;
                dq.middleCols(hd * dk, dk).noalias() = ds * s.km.middleCols(hd * dk, dk);
                dkm.middleCols(hd * dk, dk).noalias() = ds.transpose() * s.qm.middleCols(hd * dk, dk);
            }
            Mat dh1 = linear_backward(view(b.q), s.q, dq, grad_sinks(b.q, g));
            dh1 += linear_backward(view(b.k), s.k, dkm, grad_sinks(b.k, g));
            dh1 += linear_backward(view(b.v), s.v, dv, grad_sinks(b.v, g));
            dx = dx_mid + rms_norm_backward(s.h1, s.r1, dh1);
        }

        const Eigen::Index t = dx.rows();
        if (g.has(positional_)) g.values[positional_].topRows(t) += dx;
        if (d_emb) {
            for (std::size_t i = 0; i < ids.size(); ++i) d_emb->row(ids[i]) += dx.row(st.n_visual + static_cast<Eigen::Index>(i));
        }
        if (g.has(proj_weight_) || g.has(proj_bias_)) {
            const auto dpv = dx.topRows(st.n_visual);
            if (g.has(proj_weight_)) g.values[proj_weight_].noalias() += dpv.transpose() * ex.visual.fused;
            if (g.has(proj_bias_)) g.values[proj_bias_].row(0) += dpv.colwise().sum();
        }
    }
    return total;
}

double ToyModel::loss(std::span<const TrainingExample> batch) const { return loss_and_grads(batch, {}, nullptr); }

}  // namespace shipvl::fusion
