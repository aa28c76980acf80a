#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "kt/encoder.hpp"
#include "kt/tokenizer.hpp"

namespace kt::eval {

struct PredictOptions {
    std::size_t batch_size = 16;
    // Batches are dealt round-robin to this many threads; output order is
    // the input order regardless.
    std::size_t workers = 1;
};

struct Prediction {
    std::vector<int> labels;
    // Softmax probability of label 1.
    std::vector<double> scores;
    // Tokenization plus forward passes over every record.
    double wall_seconds = 0.0;
};

// Label 1 only when its logit is strictly larger; ties go to 0.
int decide(float logit0, float logit1) noexcept;
double positive_probability(float logit0, float logit1) noexcept;

Prediction predict(const enc::ModelParams& params, const enc::ModelConfig& cfg, const tok::Vocab& vocab,
                   const std::vector<std::string>& texts, const PredictOptions& opts = {});

// Same, on already tokenized input (not timed for tokenization).
Prediction predict_tokens(const enc::ModelParams& params, const enc::ModelConfig& cfg,
                          const std::vector<tok::TokenSequence>& seqs, const PredictOptions& opts = {});

}  // namespace kt::eval
