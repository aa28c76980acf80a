#pragma once

#include <cstddef>
#include <span>

namespace kt::eval {

// Positive class is label 1.
struct ConfusionMatrix {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

    std::size_t total() const noexcept { return tp + fp + tn + fn; }
    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

struct MetricsReport {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t n = 0;
    double wall_seconds = 0.0;
    // Set when the denominator was zero and the value was defined as 0.
    bool precision_undefined = false;
    bool recall_undefined = false;
};

// Throws DataError on length mismatch, empty input, or labels outside {0, 1}.
ConfusionMatrix confusion(std::span<const int> predicted, std::span<const int> gold);

MetricsReport metrics_from(const ConfusionMatrix& cm);

struct Score {
    ConfusionMatrix confusion;
    MetricsReport metrics;
};

Score score(std::span<const int> predicted, std::span<const int> gold);

}  // namespace kt::eval
