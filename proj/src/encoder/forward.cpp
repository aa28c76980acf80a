#include <cmath>

#include "kt/encoder.hpp"
#include "kt/error.hpp"
#include "kt/rng.hpp"

namespace kt::enc {

using num::Tape;
using num::Tensor;
using num::Var;

namespace {

constexpr float kMaskedScore = -1e9f;

// Dropout site ids inside a layer; the head uses layer index 0.
enum Site : std::uint64_t { attention_probs = 1, attention_output = 2, ffn_output = 3, classifier_input = 4 };

num::DropoutKey site_key(const ForwardOptions& opts, std::size_t layer, Site site) {
    return {opts.dropout_seed, hash_combine({opts.dropout_stream, static_cast<std::uint64_t>(layer), site})};
}

template <typename T>
const Var<T>& get(const num::BoundVars<T>& p, const std::string& name) {
    auto it = p.find(name);
    if (it == p.end()) throw NumericError("forward: missing parameter '" + name + "'");
    return it->second;
}

template <typename T>
Var<T> dense(const num::BoundVars<T>& p, const Var<T>& x, const std::string& prefix) {
    return num::add(num::matmul(x, get(p, prefix + ".weight")), get(p, prefix + ".bias"));
}

template <typename T>
Var<T> mask_var(Tape<T>& tape, const PackedBatch& batch) {
    Tensor<T> m(num::Shape{batch.batch, 1, 1, batch.seq_len});
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = static_cast<T>(batch.mask_bias[i]);
    return tape.constant(std::move(m));
}

}  // namespace

PackedBatch pack(std::span<const tok::TokenSequence> batch, const ModelConfig& cfg) {
    if (batch.empty()) throw DataError("forward: empty batch");
    PackedBatch out;
    out.batch = batch.size();
    out.seq_len = batch.front().ids.size();
    if (out.seq_len == 0) throw DataError("forward: empty sequence");
    if (out.seq_len > cfg.max_positions)
        throw DataError("forward: sequence length " + std::to_string(out.seq_len) + " exceeds max_positions " +
                        std::to_string(cfg.max_positions));
    out.ids.reserve(out.batch * out.seq_len);
    out.mask_bias.reserve(out.batch * out.seq_len);
    for (const auto& seq : batch) {
        if (seq.ids.size() != out.seq_len || seq.mask.size() != out.seq_len)
            throw DataError("forward: all sequences in a batch must share one length");
        for (std::size_t i = 0; i < out.seq_len; ++i) {
            if (seq.ids[i] < 0 || static_cast<std::size_t>(seq.ids[i]) >= cfg.vocab_size)
                throw DataError("forward: token id " + std::to_string(seq.ids[i]) + " outside vocabulary of " +
                                std::to_string(cfg.vocab_size));
            out.ids.push_back(seq.ids[i]);
            out.mask_bias.push_back(seq.mask[i] ? 0.0f : kMaskedScore);
        }
    }
    return out;
}

template <typename T>
num::BoundVars<T> bind(Tape<T>& tape, const num::NamedTensors<T>& params, const std::set<std::string>& trainable) {
    num::BoundVars<T> out;
    for (const auto& [name, t] : params) out.emplace(name, tape.parameter_ref(name, t, trainable.count(name) > 0));
    return out;
}

template <typename T>
Var<T> embed(Tape<T>& tape, const num::BoundVars<T>& p, const ModelConfig& cfg, const PackedBatch& batch) {
    const std::size_t B = batch.batch, S = batch.seq_len, H = cfg.hidden;
    auto words = num::embedding_lookup(get(p, "embeddings.word"), std::span<const std::int32_t>(batch.ids));
    std::vector<std::int32_t> positions(S);
    for (std::size_t i = 0; i < S; ++i) positions[i] = static_cast<std::int32_t>(i);
    auto pos = num::embedding_lookup(get(p, "embeddings.position"), std::span<const std::int32_t>(positions));
    const std::int32_t segment = 0;
    auto seg = num::embedding_lookup(get(p, "embeddings.token_type"), std::span<const std::int32_t>(&segment, 1));
    auto x = num::reshape(words, num::Shape{B, S, H});
    x = num::add(x, pos);
    x = num::add(x, seg);
    (void)tape;
    return num::layer_norm(x, get(p, "embeddings.norm.gain"), get(p, "embeddings.norm.bias"),
                           static_cast<T>(cfg.layer_norm_eps));
}

template <typename T>
Var<T> encoder_layer(Tape<T>& tape, const num::BoundVars<T>& p, const ModelConfig& cfg, std::size_t layer,
                     const Var<T>& hidden, const Var<T>& mask_bias, const ForwardOptions& opts, Var<T>* attention_out) {
    (void)tape;
    const std::string pre = layer_prefix(layer) ;
    const bool active = opts.training && layer >= opts.first_active_layer;
    const T rate = static_cast<T>(cfg.hidden_dropout);
    const T eps = static_cast<T>(cfg.layer_norm_eps);
    const std::size_t head_dim = cfg.hidden / cfg.heads;

    auto q = num::split_heads(dense(p, hidden, pre + "attention.query"), cfg.heads);
    auto k = num::split_heads(dense(p, hidden, pre + "attention.key"), cfg.heads);
    auto v = num::split_heads(dense(p, hidden, pre + "attention.value"), cfg.heads);

    auto scores = num::scale(num::matmul(q, num::transpose(k)), static_cast<T>(1.0 / std::sqrt(static_cast<double>(head_dim))));
    scores = num::add(scores, mask_bias);
    auto probs = num::softmax(scores);
    if (attention_out) *attention_out = probs;
    probs = num::dropout(probs, rate, active, site_key(opts, layer, attention_probs));

    auto context = num::merge_heads(num::matmul(probs, v));
    auto attn = num::dropout(dense(p, context, pre + "attention.output"), rate, active, site_key(opts, layer, attention_output));
    auto h1 = num::layer_norm(num::add(hidden, attn), get(p, pre + "attention.norm.gain"), get(p, pre + "attention.norm.bias"), eps);

    auto inner = num::gelu(dense(p, h1, pre + "ffn.intermediate"));
    auto ff = num::dropout(dense(p, inner, pre + "ffn.output"), rate, active, site_key(opts, layer, ffn_output));
    return num::layer_norm(num::add(h1, ff), get(p, pre + "ffn.norm.gain"), get(p, pre + "ffn.norm.bias"), eps);
}

template <typename T>
Var<T> classify(Tape<T>& tape, const num::BoundVars<T>& p, const ModelConfig& cfg, const Var<T>& hidden,
                const ForwardOptions& opts) {
    (void)tape;
    auto cls = num::select_position(hidden, 0);
    auto pooled = num::tanh(dense(p, cls, "pooler"));
    pooled = num::dropout(pooled, static_cast<T>(cfg.classifier_dropout), opts.training, site_key(opts, 0, classifier_input));
    return dense(p, pooled, "classifier");
}

template <typename T>
Var<T> forward_from(Tape<T>& tape, const num::BoundVars<T>& p, const ModelConfig& cfg, const Tensor<T>& hidden,
                    const PackedBatch& batch, std::size_t from_layer, const ForwardOptions& opts) {
    if (hidden.shape() != num::Shape{batch.batch, batch.seq_len, cfg.hidden})
        throw NumericError("forward_from: hidden states " + num::shape_str(hidden.shape()) + " do not match batch");
    if (from_layer < 1 || from_layer > cfg.layers + 1) throw NumericError("forward_from: layer index out of range");
    auto mask = mask_var(tape, batch);
    auto h = tape.constant(hidden);
    for (std::size_t l = from_layer; l <= cfg.layers; ++l) h = encoder_layer(tape, p, cfg, l, h, mask, opts);
    return classify(tape, p, cfg, h, opts);
}

template <typename T>
Var<T> forward(Tape<T>& tape, const num::BoundVars<T>& p, const ModelConfig& cfg, std::span<const tok::TokenSequence> batch,
               const ForwardOptions& opts) {
    const PackedBatch packed = pack(batch, cfg);
    auto mask = mask_var(tape, packed);
    auto h = embed(tape, p, cfg, packed);
    for (std::size_t l = 1; l <= cfg.layers; ++l) h = encoder_layer(tape, p, cfg, l, h, mask, opts);
    return classify(tape, p, cfg, h, opts);
}

num::Tensor<float> frozen_prefix(const ModelParams& params, const ModelConfig& cfg, std::span<const tok::TokenSequence> batch,
                                 std::size_t through_layer) {
    if (through_layer > cfg.layers) throw NumericError("frozen_prefix: layer index out of range");
    Tape<float> tape(false);
    auto p = bind(tape, params, {});
    const PackedBatch packed = pack(batch, cfg);
    auto mask = mask_var(tape, packed);
    auto h = embed(tape, p, cfg, packed);
    for (std::size_t l = 1; l <= through_layer; ++l) h = encoder_layer(tape, p, cfg, l, h, mask, ForwardOptions{});
    return h.value();
}

num::Tensor<float> infer_logits(const ModelParams& params, const ModelConfig& cfg, std::span<const tok::TokenSequence> batch) {
    Tape<float> tape(false);
    auto p = bind(tape, params, {});
    return forward(tape, p, cfg, batch, ForwardOptions{}).value();
}

std::vector<num::Tensor<float>> attention_maps(const ModelParams& params, const ModelConfig& cfg,
                                               std::span<const tok::TokenSequence> batch) {
    Tape<float> tape(false);
    auto p = bind(tape, params, {});
    const PackedBatch packed = pack(batch, cfg);
    auto mask = mask_var(tape, packed);
    auto h = embed(tape, p, cfg, packed);
    std::vector<num::Tensor<float>> maps;
    for (std::size_t l = 1; l <= cfg.layers; ++l) {
        Var<float> probs;
        h = encoder_layer(tape, p, cfg, l, h, mask, ForwardOptions{}, &probs);
        maps.push_back(probs.value());
    }
    return maps;
}

#define KT_INSTANTIATE_ENCODER(T)                                                                                       \
    template num::BoundVars<T> bind<T>(Tape<T>&, const num::NamedTensors<T>&, const std::set<std::string>&);            \
    template Var<T> embed<T>(Tape<T>&, const num::BoundVars<T>&, const ModelConfig&, const PackedBatch&);               \
    template Var<T> encoder_layer<T>(Tape<T>&, const num::BoundVars<T>&, const ModelConfig&, std::size_t, const Var<T>&, \
                                     const Var<T>&, const ForwardOptions&, Var<T>*);                                     \
    template Var<T> classify<T>(Tape<T>&, const num::BoundVars<T>&, const ModelConfig&, const Var<T>&,                  \
                                const ForwardOptions&);                                                                  \
    template Var<T> forward<T>(Tape<T>&, const num::BoundVars<T>&, const ModelConfig&,                                  \
                               std::span<const tok::TokenSequence>, const ForwardOptions&);                              \
    template Var<T> forward_from<T>(Tape<T>&, const num::BoundVars<T>&, const ModelConfig&, const Tensor<T>&,           \
                                    const PackedBatch&, std::size_t, const ForwardOptions&);

KT_INSTANTIATE_ENCODER(float)
KT_INSTANTIATE_ENCODER(double)

}  // namespace kt::enc
