#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "kt/corpus.hpp"
#include "kt/encoder.hpp"
#include "kt/optimizer.hpp"
#include "kt/runs.hpp"
#include "kt/tokenizer.hpp"

namespace kt::train {

struct TrainConfig {
    std::size_t max_epochs = 200;
    std::size_t patience = 10;
    std::size_t batch_size = 16;
    double train_fraction = 0.8;
    std::uint64_t seed = 0;
    std::size_t repeats = 10;

    // Throws UsageError unless patience < max_epochs, repeats >= 1,
    // batch_size >= 1 and 0 < train_fraction < 1.
    void validate() const;
};

// Patience rule over 1-based epochs. An epoch improves when its loss is
// strictly lower than every earlier one.
class EarlyStopping {
public:
    EarlyStopping(std::size_t patience, std::size_t max_epochs);

    // Feeds the validation loss of the next epoch; returns true when
    // training must stop after this epoch.
    bool update(double val_loss);

    bool stopped() const noexcept { return stopped_; }
    std::size_t epochs_run() const noexcept { return epochs_; }
    std::size_t best_epoch() const noexcept { return best_epoch_; }
    double best_loss() const noexcept { return best_loss_; }
    // True when the last update set a new best.
    bool improved() const noexcept { return improved_; }

private:
    std::size_t patience_, max_epochs_;
    std::size_t epochs_ = 0, best_epoch_ = 0, stale_ = 0;
    double best_loss_ = 0.0;
    bool stopped_ = false, improved_ = false;
};

struct TrainPlan {
    enc::FreezeConfig freeze;
    OptimizerConfig optimizer;
    // Classifier dropout (the grid's dr).
    double dropout = 0.15;
    TrainConfig config;
};

struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    bool improved = false;
};

struct TrainOutcome {
    RunResult result;
    // Best-epoch parameters; config.classifier_dropout carries the plan's dr.
    enc::ModelParams params;
    enc::ModelConfig config;
    // Validation loss of the initial parameters, before any step.
    double initial_val_loss = 0.0;
    std::vector<EpochLog> history;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Fine-tunes `init` on a stratified split of `data` (fraction and seed from
// plan.config). Per epoch: seeded shuffle, minibatch cross-entropy steps on
// the trainable subset, mean validation loss with dropout off. Frozen layers
// are evaluated once and cached. Restores the best epoch at the end.
// Deterministic for identical inputs. Throws DataError for an empty split and
// NumericError (with epoch/batch context) for a non-finite loss.
TrainOutcome train(const corpus::LabelledDataset& data, const enc::ModelParams& init, const enc::ModelConfig& cfg,
                   const tok::Vocab& vocab, const TrainPlan& plan, const EpochCallback& on_epoch = {});

// Same loop on a caller-provided split.
TrainOutcome train_split(const corpus::Split& split, const enc::ModelParams& init, const enc::ModelConfig& cfg,
                         const tok::Vocab& vocab, const TrainPlan& plan, const EpochCallback& on_epoch = {});

// Second-stage fine-tuning from an archive. Rejects NN1 ("configuration
// retired after stage-1 evaluation"). Writes the adapted archive to `out`
// when given.
TrainOutcome adapt(const std::filesystem::path& archive, const corpus::LabelledDataset& data, const tok::Vocab& vocab,
                   const TrainPlan& plan, const std::optional<std::filesystem::path>& out = std::nullopt,
                   const EpochCallback& on_epoch = {});

}  // namespace kt::train
