#include "kt/predict.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <thread>

#include "kt/error.hpp"

namespace kt::eval {

int decide(float logit0, float logit1) noexcept {
    return logit1 > logit0 ? 1 : 0;
}

double positive_probability(float logit0, float logit1) noexcept {
    return 1.0 / (1.0 + std::exp(static_cast<double>(logit0) - static_cast<double>(logit1)));
}

namespace {

void run_batches(const enc::ModelParams& params, const enc::ModelConfig& cfg, const std::vector<tok::TokenSequence>& seqs,
                 std::size_t batch_size, std::size_t first_batch, std::size_t stride, Prediction& out) {
    const std::size_t n = seqs.size();
    for (std::size_t b = first_batch; b * batch_size < n; b += stride) {
        const std::size_t lo = b * batch_size, hi = std::min(n, lo + batch_size);
        const auto logits = enc::infer_logits(params, cfg, std::span<const tok::TokenSequence>(seqs.data() + lo, hi - lo));
        for (std::size_t i = lo; i < hi; ++i) {
            const float l0 = logits[(i - lo) * 2], l1 = logits[(i - lo) * 2 + 1];
            out.labels[i] = decide(l0, l1);
            out.scores[i] = positive_probability(l0, l1);
        }
    }
}

}  // namespace

Prediction predict_tokens(const enc::ModelParams& params, const enc::ModelConfig& cfg,
                          const std::vector<tok::TokenSequence>& seqs, const PredictOptions& opts) {
    if (opts.batch_size == 0) throw UsageError("predict: batch size must be positive");
    if (seqs.empty()) throw DataError("predict: no records");
    const auto start = std::chrono::steady_clock::now();
    Prediction out;
    out.labels.assign(seqs.size(), 0);
    out.scores.assign(seqs.size(), 0.0);

    const std::size_t batches = (seqs.size() + opts.batch_size - 1) / opts.batch_size;
    const std::size_t workers = std::clamp<std::size_t>(opts.workers, 1, batches);
    if (workers == 1) {
        run_batches(params, cfg, seqs, opts.batch_size, 0, 1, out);
    } else {
        // Workers write disjoint slots of the output vectors.
        std::vector<std::exception_ptr> errors(workers);
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                try {
                    run_batches(params, cfg, seqs, opts.batch_size, w, workers, out);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        for (auto& t : pool) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }
    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

Prediction predict(const enc::ModelParams& params, const enc::ModelConfig& cfg, const tok::Vocab& vocab,
                   const std::vector<std::string>& texts, const PredictOptions& opts) {
    const auto start = std::chrono::steady_clock::now();
    auto seqs = tok::tokenize_all(texts, vocab, cfg.tokenizer_options());
    tok::trim_padding(seqs);
    Prediction out = predict_tokens(params, cfg, seqs, opts);
    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

}  // namespace kt::eval
