#include "kt/metrics.hpp"

#include <string>

#include "kt/error.hpp"

namespace kt::eval {

ConfusionMatrix confusion(std::span<const int> predicted, std::span<const int> gold) {
    if (predicted.size() != gold.size())
        throw DataError("score: " + std::to_string(predicted.size()) + " predictions for " + std::to_string(gold.size()) +
                        " gold labels");
    if (gold.empty()) throw DataError("score: nothing to score");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        const int p = predicted[i], g = gold[i];
        if ((p != 0 && p != 1) || (g != 0 && g != 1))
            throw DataError("score: labels must be 0 or 1 (record " + std::to_string(i) + ")");
        if (p == 1 && g == 1) ++cm.tp;
        else if (p == 1) ++cm.fp;
        else if (g == 1) ++cm.fn;
        else ++cm.tn;
    }
    return cm;
}

MetricsReport metrics_from(const ConfusionMatrix& cm) {
    MetricsReport m;
    m.n = cm.total();
    if (m.n == 0) throw DataError("score: empty confusion matrix");
    m.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(m.n);
    if (cm.tp + cm.fp == 0) m.precision_undefined = true;
    else m.precision = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fp);
    if (cm.tp + cm.fn == 0) m.recall_undefined = true;
    else m.recall = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
    if (m.precision + m.recall > 0.0) m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    return m;
}

Score score(std::span<const int> predicted, std::span<const int> gold) {
    const auto cm = confusion(predicted, gold);
    return {cm, metrics_from(cm)};
}

}  // namespace kt::eval
