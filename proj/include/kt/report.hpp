#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "kt/runs.hpp"
#include "kt/stats.hpp"

namespace kt::eval {

struct CellKey {
    std::string freeze;
    std::string optimizer;
    double lr = 0.0;
    double dr = 0.0;

    auto operator<=>(const CellKey&) const = default;
};

struct CellStats {
    CellKey key;
    Summary accuracy;
    Summary f1;
    Summary seconds;
};

enum class Metric { accuracy, f1, seconds };

std::string to_string(Metric m);
Metric metric_from_string(const std::string& s);
const Summary& pick(const CellStats& c, Metric m);

// Groups runs by (freeze, optimizer, lr, dr), sorted by key. Throws
// DataError when `runs` is empty.
std::vector<CellStats> aggregate(const std::vector<train::RunResult>& runs);

// Runs whose cell matches `key`.
std::vector<train::RunResult> select(const std::vector<train::RunResult>& runs, const CellKey& key);

// One block per freeze variant: optimizer rows x "(lr, dr)" columns of
// "mean ± sd"; the best cell of each optimizer row is starred.
std::string render_table(const std::vector<CellStats>& table, Metric metric);

// Long-form CSV, one row per cell with mean/sd of every metric.
void emit_report(const std::vector<CellStats>& table, const std::filesystem::path& path);

// Grouped-bar CSV: one row per (freeze, optimizer, lr, dr) with the chosen
// metric's mean and sd, in the order the bars are drawn.
void emit_plot_data(const std::vector<CellStats>& table, Metric metric, const std::filesystem::path& path);

// Static three-panel SVG (accuracy, F1, training time) of grouped bars with
// ±1 sd whiskers.
void emit_svg(const std::vector<CellStats>& table, const std::filesystem::path& path);

}  // namespace kt::eval
