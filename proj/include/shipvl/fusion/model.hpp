#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "shipvl/fusion/encoder.hpp"
#include "shipvl/fusion/layers.hpp"
#include "shipvl/fusion/tensor.hpp"
#include "shipvl/image.hpp"

namespace shipvl::fusion {

struct ToyModelConfig {
    int model_dim = 64;
    int heads = 4;
    int total_layers = 4;
    int lora_layers = 3;  // adapters live in the topmost lora_layers blocks
    int lora_rank = 4;
    double lora_alpha = 8.0;
    int scales_a = 2;  // pyramid levels fed through backbone A
    int scales_b = 2;  // pyramid levels fed through backbone B
    int image_size = 40;
    int patch = 8;
    int encoder_channels = 16;
    int ffn_mult = 4;
    int max_seq = 192;
    int max_answer_len = 96;
    double scale_init_mean = 1.0;
    double scale_init_std = 0.02;
    std::uint64_t seed = 0;

    int head_dim() const noexcept { return model_dim / heads; }
    int visual_tokens_per_scale(int scale) const { return patch_grid_tokens(image_size, patch, scale); }
    int visual_tokens() const;  // N_v after fusion

    // Throws InvalidArgument on inconsistent settings.
    void validate() const;

    nlohmann::json to_json() const;
    static ToyModelConfig from_json(const nlohmann::json& j);
};

enum class ParamClass { base, embedding, positional, projection, lora_down, lora_up, bias, scale };

std::string_view to_string(ParamClass c) noexcept;
ParamClass parse_param_class(std::string_view text);

using ParamClassSet = std::set<ParamClass>;

// Every adapter and embedding class: the union used by gradient checks.
ParamClassSet all_trainable_classes();

struct Parameter {
    std::string name;
    ParamClass cls = ParamClass::base;
    Mat value;
};

// Gradient buffers aligned with ToyModel::parameters(); entries for classes
// outside the requested set stay empty.
struct Gradients {
    std::vector<Mat> values;
    ParamClassSet classes;

    bool has(std::size_t index) const { return index < values.size() && values[index].size() > 0; }
};

// Tokens of one sequence: visual rows first, then language rows.
struct MultiModalSequence {
    Mat tokens;
    int n_visual = 0;
    int n_language = 0;
};

// Precomputed frozen-encoder output for one image: [F_v | G_v] along channels.
struct VisualFeatures {
    Mat fused;  // N_v x (channels_a + channels_b)
};

// Visual rows first, then language rows. Throws ShapeMismatch on width mismatch or empty language tokens.
MultiModalSequence assemble_multimodal(const Mat& p_v, const Mat& p_l);

struct AttentionTrace {
    std::vector<Mat> probabilities;  // one T x T matrix per head
};

// One supervised sequence: the answer is scored, everything before it is context.
struct TrainingExample {
    VisualFeatures visual;
    std::vector<int> instruction;  // token ids without specials
    std::vector<int> answer;       // token ids without specials
};

class ToyModel {
public:
    explicit ToyModel(const ToyModelConfig& config);

    const ToyModelConfig& config() const noexcept { return config_; }
    const EncoderStandIn& encoder_a() const noexcept { return encoder_a_; }
    const EncoderStandIn& encoder_b() const noexcept { return encoder_b_; }

    std::vector<Parameter>& parameters() noexcept { return params_; }
    const std::vector<Parameter>& parameters() const noexcept { return params_; }
    std::optional<std::size_t> find_parameter(std::string_view name) const;
    const Mat& parameter(std::string_view name) const;
    Mat& parameter(std::string_view name);

    std::size_t parameter_count() const;
    std::size_t parameter_count(const ParamClassSet& classes) const;

    // Adds zero bias and N(mean, std) scale vectors around every block linear layer.
    // Idempotent: existing bias/scale values are left untouched.
    void enable_bias_scale(std::uint64_t seed);
    bool has_bias_scale() const noexcept { return bias_scale_; }

    VisualFeatures encode(const GrayImage& image) const;
    std::vector<FeatureTokens> encode_backbone(const GrayImage& image, Backbone backbone) const;

    // Channel concat of F_v and G_v followed by the learned projection to model_dim.
    Mat fuse_and_project(const Mat& f_v, const Mat& g_v) const;
    Mat project(const VisualFeatures& visual) const;

    // Embedding rows for token ids (no positional term).
    Mat embed_tokens(std::span<const int> ids) const;

    // Multi-head causal self-attention of block `layer` on already-normalized rows.
    // With adapted = false, low-rank adapters are ignored even if present.
    Mat attention_forward(const Mat& x, int layer, bool adapted = true, AttentionTrace* trace = nullptr) const;

    // Logits (T x vocab) for the sequence [visual tokens, language ids].
    Mat forward(const VisualFeatures& visual, std::span<const int> language_ids) const;
    Mat forward(const GrayImage& image, std::string_view instruction) const;

    // Bypass-adapter forward used to check that zero-initialized adapters are an identity.
    Mat forward_unadapted(const VisualFeatures& visual, std::span<const int> language_ids) const;

    // Answer-masked cross-entropy averaged over answer tokens per example, then over
    // the batch. Gradients are filled only for parameters in `trainable`.
    double loss_and_grads(std::span<const TrainingExample> batch, const ParamClassSet& trainable,
                          Gradients* grads) const;
    double loss(std::span<const TrainingExample> batch) const;

    // Builds [<bos> instruction <sep> answer] ids and the answer-target span.
    static std::vector<int> language_ids(const TrainingExample& ex);

    TrainingExample make_example(const GrayImage& image, std::string_view instruction, std::string_view answer) const;

private:
    struct LinearSlots {
        int weight = -1;
        int down = -1;
        int up = -1;
        int bias = -1;
        int scale = -1;
    };
    struct BlockSlots {
        LinearSlots q, k, v, o, gate, up, down;
    };

    int add_param(std::string name, ParamClass cls, Mat value);
    LinearView view(const LinearSlots& s, bool use_lora = true) const;
    LinearGrads grad_sinks(const LinearSlots& s, Gradients& g) const;

    struct ForwardState;
    Mat run(const VisualFeatures& visual, std::span<const int> ids, bool use_lora, ForwardState* state) const;

    ToyModelConfig config_;
    EncoderStandIn encoder_a_;
    EncoderStandIn encoder_b_;
    std::vector<Parameter> params_;
    int embedding_ = -1;
    int positional_ = -1;
    int proj_weight_ = -1;
    int proj_bias_ = -1;
    std::vector<BlockSlots> blocks_;
    bool bias_scale_ = false;
};

}  // namespace shipvl::fusion
