#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "kt/metrics.hpp"

namespace kt::train {

// One training run of one grid cell; also one ledger row.
struct RunResult {
    std::string freeze;
    std::string optimizer;
    double lr = 0.0;
    double dr = 0.0;
    std::size_t repeat = 0;
    std::uint64_t seed = 0;
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0;
    double best_val_loss = 0.0;
    // Validation metrics of the restored best-epoch parameters.
    eval::MetricsReport metrics;
    double train_seconds = 0.0;
    std::string checkpoint;
};

}  // namespace kt::train
