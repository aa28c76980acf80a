#include "kt/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <numeric>

#include "kt/archive.hpp"
#include "kt/error.hpp"
#include "kt/predict.hpp"
#include "kt/rng.hpp"

namespace kt::train {

void TrainConfig::validate() const {
    if (max_epochs < 1) throw UsageError("max_epochs must be >= 1");
    if (patience >= max_epochs) throw UsageError("patience must be smaller than max_epochs");
    if (batch_size < 1) throw UsageError("batch size must be >= 1");
    if (repeats < 1) throw UsageError("repeats must be >= 1");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw UsageError("train fraction must lie in (0, 1)");
}

EarlyStopping::EarlyStopping(std::size_t patience, std::size_t max_epochs) : patience_(patience), max_epochs_(max_epochs) {
    if (max_epochs_ < 1) throw UsageError("max_epochs must be >= 1");
}

bool EarlyStopping::update(double val_loss) {
    if (stopped_) throw UsageError("early stopping: update after stop");
    ++epochs_;
    improved_ = epochs_ == 1 || val_loss < best_loss_;
    if (improved_) {
        best_loss_ = val_loss;
        best_epoch_ = epochs_;
        stale_ = 0;
    } else {
        ++stale_;
    }
    stopped_ = epochs_ >= max_epochs_ || (patience_ > 0 && stale_ >= patience_) || (patience_ == 0 && !improved_);
    return stopped_;
}

namespace {

constexpr std::size_t kEvalBatch = 64;
constexpr std::uint64_t kEpochTag = 0x65706f6368;

// Hidden states entering the first trainable layer, one row per record.
struct Cache {
    std::size_t n = 0, seq_len = 0, hidden = 0;
    std::vector<float> states;      // [n, S, H]
    std::vector<float> mask_bias;   // [n, S]
    std::vector<int> labels;
};

Cache build_cache(const corpus::LabelledDataset& data, const enc::ModelParams& params, const enc::ModelConfig& cfg,
                  const tok::Vocab& vocab, std::size_t through_layer) {
    auto seqs = tok::tokenize_all(data.texts(), vocab, cfg.tokenizer_options());
    tok::trim_padding(seqs);
    Cache c;
    c.n = seqs.size();
    c.seq_len = seqs.front().length();
    c.hidden = cfg.hidden;
    c.labels = data.labels();
    const std::size_t row = c.seq_len * c.hidden;
    c.states.resize(c.n * row);
    c.mask_bias.resize(c.n * c.seq_len);
    for (std::size_t lo = 0; lo < c.n; lo += kEvalBatch) {
        const std::size_t hi = std::min(c.n, lo + kEvalBatch);
        std::span<const tok::TokenSequence> chunk(seqs.data() + lo, hi - lo);
        const auto h = enc::frozen_prefix(params, cfg, chunk, through_layer);
        std::memcpy(c.states.data() + lo * row, h.ptr(), h.size() * sizeof(float));
        const auto packed = enc::pack(chunk, cfg);
        std::copy(packed.mask_bias.begin(), packed.mask_bias.end(), c.mask_bias.begin() + static_cast<std::ptrdiff_t>(lo * c.seq_len));
    }
    return c;
}

struct Batch {
    num::Tensor<float> hidden;
    enc::PackedBatch packed;
    std::vector<int> labels;
};

Batch gather(const Cache& c, std::span<const std::size_t> rows) {
    Batch b;
    const std::size_t row = c.seq_len * c.hidden;
    b.hidden = num::Tensor<float>(num::Shape{rows.size(), c.seq_len, c.hidden});
    b.packed.batch = rows.size();
    b.packed.seq_len = c.seq_len;
    b.packed.mask_bias.resize(rows.size() * c.seq_len);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::memcpy(b.hidden.ptr() + i * row, c.states.data() + rows[i] * row, row * sizeof(float));
        std::memcpy(b.packed.mask_bias.data() + i * c.seq_len, c.mask_bias.data() + rows[i] * c.seq_len, c.seq_len * sizeof(float));
        b.labels.push_back(c.labels[rows[i]]);
    }
    return b;
}

// Inference over the cache: summed per-example loss and predicted labels.
std::pair<double, std::vector<int>> evaluate(const Cache& c, const enc::ModelParams& params, const enc::ModelConfig& cfg,
                                             std::size_t from_layer) {
    double total = 0.0;
    std::vector<int> predicted;
    predicted.reserve(c.n);
    std::vector<std::size_t> rows(c.n);
    std::iota(rows.begin(), rows.end(), 0);
    for (std::size_t lo = 0; lo < c.n; lo += kEvalBatch) {
        const std::size_t hi = std::min(c.n, lo + kEvalBatch);
        const Batch b = gather(c, std::span<const std::size_t>(rows.data() + lo, hi - lo));
        num::Tape<float> tape(false);
        const auto p = enc::bind(tape, params, {});
        const auto logits = enc::forward_from(tape, p, cfg, b.hidden, b.packed, from_layer, enc::ForwardOptions{});
        const auto loss = num::cross_entropy(logits, std::span<const int>(b.labels));
        total += static_cast<double>(loss.value()[0]) * static_cast<double>(hi - lo);
        const auto& l = logits.value();
        for (std::size_t i = 0; i < hi - lo; ++i) predicted.push_back(eval::decide(l[2 * i], l[2 * i + 1]));
    }
    return {total / static_cast<double>(c.n), std::move(predicted)};
}

}  // namespace

TrainOutcome train_split(const corpus::Split& split, const enc::ModelParams& init, const enc::ModelConfig& cfg,
                         const tok::Vocab& vocab, const TrainPlan& plan, const EpochCallback& on_epoch) {
    const auto start = std::chrono::steady_clock::now();
    plan.config.validate();
    plan.optimizer.validate();
    if (!(plan.dropout >= 0.0 && plan.dropout < 1.0)) throw UsageError("dropout must lie in [0, 1)");
    if (split.train.empty()) throw DataError("train: empty training split");
    if (split.validation.empty()) throw DataError("train: empty validation split");
    if (vocab.size() != cfg.vocab_size)
        throw DataError("vocabulary has " + std::to_string(vocab.size()) + " tokens but the model expects " +
                        std::to_string(cfg.vocab_size));
    enc::validate_params(init, cfg);

    TrainOutcome out;
    out.config = cfg;
    out.config.classifier_dropout = plan.dropout;
    out.params = init;
    const auto& run_cfg = out.config;
    auto& params = out.params;

    const std::size_t first = plan.freeze.first_unfrozen_layer(cfg);
    const auto trainable = enc::trainable_set(cfg, plan.freeze);
    const Cache train_cache = build_cache(split.train, init, cfg, vocab, first - 1);
    const Cache val_cache = build_cache(split.validation, init, cfg, vocab, first - 1);

    Optimizer<float> opt(plan.optimizer, params, trainable);
    EarlyStopping stopper(plan.config.patience, plan.config.max_epochs);
    try {
        out.initial_val_loss = evaluate(val_cache, params, run_cfg, first).first;
    } catch (const NumericError& e) {
        throw NumericError(std::string("epoch 0, validation: ") + e.what());
    }

    std::map<std::string, num::Tensor<float>> best;
    auto snapshot = [&] {
        for (const auto& name : trainable) best[name] = params.at(name);
    };
    snapshot();

    const std::uint64_t seed = plan.config.seed;
    std::vector<std::size_t> order(train_cache.n);
    for (std::size_t epoch = 1;; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        SplitMix64 rng(hash_combine({seed, kEpochTag, epoch}));
        seeded_shuffle(order.begin(), order.end(), rng);

        double epoch_loss = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t lo = 0; lo < order.size(); lo += plan.config.batch_size, ++batch_index) {
            const std::size_t hi = std::min(order.size(), lo + plan.config.batch_size);
            const Batch b = gather(train_cache, std::span<const std::size_t>(order.data() + lo, hi - lo));
            try {
                num::Tape<float> tape;
                const auto p = enc::bind(tape, params, trainable);
                enc::ForwardOptions fo;
                fo.training = true;
                fo.first_active_layer = first;
                fo.dropout_seed = seed;
                fo.dropout_stream = hash_combine({epoch, batch_index});
                const auto logits = enc::forward_from(tape, p, run_cfg, b.hidden, b.packed, first, fo);
                const auto loss = num::cross_entropy(logits, std::span<const int>(b.labels));
                epoch_loss += static_cast<double>(loss.value()[0]) * static_cast<double>(hi - lo);
                const auto grads = tape.backward(loss);
                opt.step(params, grads);
            } catch (const NumericError& e) {
                throw NumericError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index) + ": " + e.what());
            }
        }

        double val_loss = 0.0;
        try {
            val_loss = evaluate(val_cache, params, run_cfg, first).first;
        } catch (const NumericError& e) {
            throw NumericError("epoch " + std::to_string(epoch) + ", validation: " + e.what());
        }
        const bool stop = stopper.update(val_loss);
        if (stopper.improved()) snapshot();
        EpochLog log{epoch, epoch_loss / static_cast<double>(train_cache.n), val_loss, stopper.improved()};
        out.history.push_back(log);
        if (on_epoch) on_epoch(log);
        if (stop) break;
    }

    for (auto& [name, t] : best) params.at(name) = std::move(t);

    const auto eval_start = std::chrono::steady_clock::now();
    const auto [loss, predicted] = evaluate(val_cache, params, run_cfg, first);
    auto scored = eval::score(predicted, val_cache.labels);
    const auto end = std::chrono::steady_clock::now();

    auto& r = out.result;
    r.freeze = enc::to_string(plan.freeze.variant);
    r.optimizer = to_string(plan.optimizer.kind);
    r.lr = plan.optimizer.lr;
    r.dr = plan.dropout;
    r.seed = seed;
    r.epochs_run = stopper.epochs_run();
    r.best_epoch = stopper.best_epoch();
    r.best_val_loss = stopper.best_loss();
    r.metrics = scored.metrics;
    r.metrics.wall_seconds = std::chrono::duration<double>(end - eval_start).count();
    r.train_seconds = std::chrono::duration<double>(eval_start - start).count();
    (void)loss;
    return out;
}

TrainOutcome train(const corpus::LabelledDataset& data, const enc::ModelParams& init, const enc::ModelConfig& cfg,
                   const tok::Vocab& vocab, const TrainPlan& plan, const EpochCallback& on_epoch) {
    plan.config.validate();
    const auto parts = corpus::split(data, {plan.config.train_fraction, plan.config.seed, true});
    return train_split(parts, init, cfg, vocab, plan, on_epoch);
}

TrainOutcome adapt(const std::filesystem::path& archive, const corpus::LabelledDataset& data, const tok::Vocab& vocab,
                   const TrainPlan& plan, const std::optional<std::filesystem::path>& out, const EpochCallback& on_epoch) {
    if (plan.freeze.variant == enc::FreezeVariant::nn1_head_only)
        throw UsageError("NN1: configuration retired after stage-1 evaluation");
    const auto loaded = enc::load_archive(archive);
    auto outcome = train(data, loaded.params, loaded.config, vocab, plan, on_epoch);
    if (out) {
        enc::save_archive(outcome.params, outcome.config, *out);
        outcome.result.checkpoint = out->string();
    }
    return outcome;
}

}  // namespace kt::train
