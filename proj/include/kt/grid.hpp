#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kt/encoder.hpp"
#include "kt/optimizer.hpp"
#include "kt/runs.hpp"
#include "kt/trainer.hpp"

namespace kt::train {

struct GridCell {
    std::size_t index = 0;
    enc::FreezeVariant freeze = enc::FreezeVariant::nn3_last_two_layers;
    OptimizerKind optimizer = OptimizerKind::adam;
    double lr = 0.0;
    double dr = 0.0;
};

// Cells enumerate freeze-major, then optimizer, lr, dr.
struct GridSpec {
    std::vector<enc::FreezeVariant> freezes;
    std::vector<OptimizerKind> optimizers;
    std::vector<double> lrs;
    std::vector<double> drs;

    // {NN1,NN2,NN3} x {SGD,Adam,AdamW} x {1e-4,5e-4,5e-3} x {0.15,0.20,0.25}.
    static GridSpec full();

    // Throws UsageError when any dimension is empty or repeats a value.
    void validate() const;
    std::size_t cells() const noexcept;
    GridCell cell(std::size_t index) const;
    std::vector<GridCell> enumerate() const;
};

// 64-bit mix of (base seed, cell index, repeat).
std::uint64_t run_seed(std::uint64_t base_seed, std::size_t cell_index, std::size_t repeat);

// Ledger CSV: one row per finished run, header first.
extern const char* const kLedgerHeader;
std::vector<RunResult> read_ledger(const std::filesystem::path& path);
std::string ledger_row(const RunResult& r);

struct GridOptions {
    std::filesystem::path ledger;
    std::size_t repeats = 10;
    std::uint64_t base_seed = 0;
    std::size_t workers = 1;
};

// Executes one (cell, repeat). The seed is already derived.
using RunFn = std::function<RunResult(const GridCell& cell, std::size_t repeat, std::uint64_t seed)>;

// Runs every (cell, repeat) not yet present in the ledger, appending each
// result as it finishes. Returns ledger rows plus new results for the grid,
// ordered by (cell, repeat). Safe to call again after an interruption.
std::vector<RunResult> run_grid(const GridSpec& grid, const GridOptions& opts, const RunFn& run);

// RunFn that fine-tunes `init` on `data`, optionally writing one archive per
// run into `checkpoint_dir`.
RunFn make_train_run(const corpus::LabelledDataset& data, const enc::ModelParams& init, const enc::ModelConfig& cfg,
                     const tok::Vocab& vocab, const TrainConfig& tcfg,
                     std::optional<std::filesystem::path> checkpoint_dir = std::nullopt);

}  // namespace kt::train
