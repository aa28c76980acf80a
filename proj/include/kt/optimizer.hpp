#pragma once

#include <cstddef>
#include <set>
#include <string>

#include "kt/tape.hpp"
#include "kt/tensor.hpp"

namespace kt::train {

enum class OptimizerKind { sgd, adam, adamw };

std::string to_string(OptimizerKind k);
// Case-insensitive "sgd", "adam", "adamw".
OptimizerKind optimizer_from_string(const std::string& s);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    // lr = 0 is accepted and leaves parameters unchanged.
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    // AdamW only.
    double weight_decay = 0.01;

    // Throws UsageError on out-of-range values.
    void validate() const;
};

// Decoupled decay applies to weight matrices only (rank >= 2); biases and
// layer-norm vectors are exempt.
bool decays(const num::Shape& shape) noexcept;

// Updates the named subset of a parameter map in place.
//   SGD:   theta -= lr g
//   Adam:  m = b1 m + (1-b1) g;  v = b2 v + (1-b2) g^2;
//          theta -= lr mhat / (sqrt(vhat) + eps)
//   AdamW: theta -= lr wd theta (matrices), then the Adam update
template <typename T>
class Optimizer {
public:
    Optimizer(OptimizerConfig cfg, const num::NamedTensors<T>& params, const std::set<std::string>& trainable);

    // Throws NumericError when the gradient names differ from the trainable
    // set, a shape differs, or a gradient holds NaN/Inf (naming the tensor).
    // Nothing is modified when it throws.
    void step(num::NamedTensors<T>& params, const num::GradientMap<T>& grads);

    std::size_t steps() const noexcept { return t_; }
    const OptimizerConfig& config() const noexcept { return cfg_; }
    const std::set<std::string>& trainable() const noexcept { return names_; }

private:
    OptimizerConfig cfg_;
    std::set<std::string> names_;
    num::NamedTensors<T> m_, v_;
    std::size_t t_ = 0;
};

extern template class Optimizer<float>;
extern template class Optimizer<double>;

}  // namespace kt::train
