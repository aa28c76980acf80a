#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "kt/ops.hpp"
#include "kt/tensor.hpp"
#include "kt/tokenizer.hpp"

namespace kt::enc {

// Architecture dimensions. Defaults are the full-scale 12-layer clinical
// encoder; classifier_dropout is the grid's dr.
struct ModelConfig {
    std::size_t layers = 12;
    std::size_t hidden = 768;
    std::size_t heads = 12;
    std::size_t ffn = 3072;
    std::size_t vocab_size = 28996;
    std::size_t max_positions = 512;
    std::size_t type_vocab_size = 2;
    double layer_norm_eps = 1e-12;
    double hidden_dropout = 0.1;
    double classifier_dropout = 0.15;
    // Tokenizer settings travel with the weights they were trained against.
    bool lowercase = true;
    std::size_t max_len = 128;

    // Throws DataError on an inconsistent configuration.
    void validate() const;

    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);

    tok::TokenizerOptions tokenizer_options() const { return {max_len, lowercase, 100}; }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Small configuration for tests and desk-scale experiments.
ModelConfig toy_config(std::size_t vocab_size, std::size_t layers = 2, std::size_t hidden = 8, std::size_t heads = 2,
                       std::size_t ffn = 16, std::size_t max_len = 16);

void save_config(const ModelConfig& cfg, const std::filesystem::path& path);
ModelConfig load_config(const std::filesystem::path& path);

using ModelParams = num::NamedTensors<float>;

// Canonical tensor names (embeddings, layers bottom to top, pooler,
// classifier) with their shapes. Layers are numbered from 1. Dense weights
// are stored [in, out] so that y = x W + b.
std::vector<std::pair<std::string, num::Shape>> parameter_layout(const ModelConfig& cfg);
std::vector<std::string> parameter_names(const ModelConfig& cfg);
std::string layer_prefix(std::size_t layer);

// Throws DataError unless every canonical tensor is present exactly once
// with its canonical shape and no other tensor is present.
void validate_params(const ModelParams& params, const ModelConfig& cfg);

std::size_t parameter_count(const ModelParams& params);

// Truncated normal (cut at 2 sigma) dense weights and embeddings, zero
// biases, unit layer-norm gains. 0.02 is the usual scale for wide pretrained
// encoders.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed, double sigma = 0.02);

enum class FreezeVariant { nn1_head_only, nn2_last_layer, nn3_last_two_layers };

std::string to_string(FreezeVariant v);
FreezeVariant freeze_from_string(const std::string& s);

struct FreezeConfig {
    FreezeVariant variant = FreezeVariant::nn3_last_two_layers;

    // Number of top encoder layers that train alongside pooler + classifier.
    std::size_t unfrozen_layers() const noexcept;
    // 1-based index of the lowest unfrozen layer; layers + 1 when none.
    std::size_t first_unfrozen_layer(const ModelConfig& cfg) const noexcept;
};

// Exact trainable subset in canonical order.
std::vector<std::string> trainable_params(const ModelConfig& cfg, const FreezeConfig& freeze);
std::set<std::string> trainable_set(const ModelConfig& cfg, const FreezeConfig& freeze);

struct ForwardOptions {
    bool training = false;
    // Layers at or above this 1-based index run with dropout when training;
    // lower layers always run in inference mode.
    std::size_t first_active_layer = 1;
    std::uint64_t dropout_seed = 0;
    // Per-call stream id, e.g. derived from (epoch, batch).
    std::uint64_t dropout_stream = 0;
};

// Packs a batch into flat ids and a [B, 1, 1, S] additive attention mask
// (0 on real tokens, -1e9 on padding). Throws if lengths differ or exceed
// the positional table.
struct PackedBatch {
    std::size_t batch = 0;
    std::size_t seq_len = 0;
    std::vector<std::int32_t> ids;
    std::vector<float> mask_bias;
};
PackedBatch pack(std::span<const tok::TokenSequence> batch, const ModelConfig& cfg);

// Binds parameters onto `tape` without copying. Names in `trainable` are
// tracked; all others are frozen.
template <typename T>
num::BoundVars<T> bind(num::Tape<T>& tape, const num::NamedTensors<T>& params, const std::set<std::string>& trainable);

// Token + position + segment(0) embeddings, then layer norm. [B, S, H].
template <typename T>
num::Var<T> embed(num::Tape<T>& tape, const num::BoundVars<T>& p, const ModelConfig& cfg, const PackedBatch& batch);

// One post-norm encoder layer (1-based index). When `attention_out` is set
// it receives the attention probabilities [B, A, S, S].
template <typename T>
num::Var<T> encoder_layer(num::Tape<T>& tape, const num::BoundVars<T>& p, const ModelConfig& cfg, std::size_t layer,
                          const num::Var<T>& hidden, const num::Var<T>& mask_bias, const ForwardOptions& opts,
                          num::Var<T>* attention_out = nullptr);

// Pooler (dense + tanh over position 0), classifier dropout, then the
// two-logit classifier. [B, 2].
template <typename T>
num::Var<T> classify(num::Tape<T>& tape, const num::BoundVars<T>& p, const ModelConfig& cfg, const num::Var<T>& hidden,
                     const ForwardOptions& opts);

// Full forward pass producing [B, 2] logits.
template <typename T>
num::Var<T> forward(num::Tape<T>& tape, const num::BoundVars<T>& p, const ModelConfig& cfg,
                    std::span<const tok::TokenSequence> batch, const ForwardOptions& opts = {});

// Runs layers [from_layer, L] and the head starting from cached hidden
// states, i.e. the output of layer from_layer - 1 (or the embeddings).
template <typename T>
num::Var<T> forward_from(num::Tape<T>& tape, const num::BoundVars<T>& p, const ModelConfig& cfg,
                         const num::Tensor<T>& hidden, const PackedBatch& batch, std::size_t from_layer,
                         const ForwardOptions& opts = {});

// Inference-mode hidden states after `through_layer` layers (0 = embeddings
// only). Used to cache the frozen bottom of the stack once per dataset.
num::Tensor<float> frozen_prefix(const ModelParams& params, const ModelConfig& cfg,
                                 std::span<const tok::TokenSequence> batch, std::size_t through_layer);

// Convenience inference: logits [B, 2] without gradients or dropout.
num::Tensor<float> infer_logits(const ModelParams& params, const ModelConfig& cfg,
                                std::span<const tok::TokenSequence> batch);

// Per-layer attention probabilities [B, A, S, S] from an inference pass;
// exposed for diagnostics and tests.
std::vector<num::Tensor<float>> attention_maps(const ModelParams& params, const ModelConfig& cfg,
                                               std::span<const tok::TokenSequence> batch);

}  // namespace kt::enc
