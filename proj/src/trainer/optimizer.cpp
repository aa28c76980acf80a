#include "kt/optimizer.hpp"

#include <cctype>
#include <cmath>

#include "kt/error.hpp"

namespace kt::train {

std::string to_string(OptimizerKind k) {
    switch (k) {
        case OptimizerKind::sgd: return "SGD";
        case OptimizerKind::adam: return "Adam";
        case OptimizerKind::adamw: return "AdamW";
    }
    return "Adam";
}

OptimizerKind optimizer_from_string(const std::string& s) {
    std::string l;
    for (char c : s) l.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (l == "sgd") return OptimizerKind::sgd;
    if (l == "adam") return OptimizerKind::adam;
    if (l == "adamw") return OptimizerKind::adamw;
    throw UsageError("unknown optimizer '" + s + "' (expected sgd, adam or adamw)");
}

void OptimizerConfig::validate() const {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw UsageError("learning rate must be a finite value >= 0");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) throw UsageError("betas must lie in (0, 1)");
    if (!(eps > 0.0)) throw UsageError("epsilon must be positive");
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw UsageError("weight decay must be >= 0");
}

bool decays(const num::Shape& shape) noexcept {
    return shape.size() >= 2;
}

template <typename T>
Optimizer<T>::Optimizer(OptimizerConfig cfg, const num::NamedTensors<T>& params, const std::set<std::string>& trainable)
    : cfg_(cfg), names_(trainable) {
    cfg_.validate();
    for (const auto& name : names_) {
        auto it = params.find(name);
        if (it == params.end()) throw NumericError("optimizer: unknown parameter '" + name + "'");
        if (cfg_.kind != OptimizerKind::sgd) {
            m_.emplace(name, num::Tensor<T>(it->second.shape()));
            v_.emplace(name, num::Tensor<T>(it->second.shape()));
        }
    }
}

template <typename T>
void Optimizer<T>::step(num::NamedTensors<T>& params, const num::GradientMap<T>& grads) {
    for (const auto& [name, g] : grads)
        if (!names_.count(name)) throw NumericError("optimizer: gradient for non-trainable parameter '" + name + "'");
    for (const auto& name : names_) {
        auto g = grads.find(name);
        if (g == grads.end()) throw NumericError("optimizer: missing gradient for '" + name + "'");
        auto p = params.find(name);
        if (p == params.end()) throw NumericError("optimizer: parameter '" + name + "' not found");
        if (g->second.shape() != p->second.shape())
            throw NumericError("optimizer: gradient of '" + name + "' has shape " + num::shape_str(g->second.shape()) +
                               ", parameter " + num::shape_str(p->second.shape()));
        if (!g->second.all_finite()) throw NumericError("optimizer: non-finite gradient in '" + name + "'");
    }

    ++t_;
    const T lr = static_cast<T>(cfg_.lr);
    if (cfg_.kind == OptimizerKind::sgd) {
        for (const auto& name : names_) {
            T* w = params.at(name).ptr();
            const T* g = grads.at(name).ptr();
            for (std::size_t i = 0, n = params.at(name).size(); i < n; ++i) w[i] -= lr * g[i];
        }
        return;
    }

    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2), eps = static_cast<T>(cfg_.eps);
    const T c1 = T(1) - static_cast<T>(std::pow(cfg_.beta1, static_cast<double>(t_)));
    const T c2 = T(1) - static_cast<T>(std::pow(cfg_.beta2, static_cast<double>(t_)));
    for (const auto& name : names_) {
        auto& param = params.at(name);
        T* w = param.ptr();
        const T* g = grads.at(name).ptr();
        T* m = m_.at(name).ptr();
        T* v = v_.at(name).ptr();
        const std::size_t n = param.size();
        if (cfg_.kind == OptimizerKind::adamw && decays(param.shape())) {
            const T keep = T(1) - lr * static_cast<T>(cfg_.weight_decay);
            for (std::size_t i = 0; i < n; ++i) w[i] *= keep;
        }
        for (std::size_t i = 0; i < n; ++i) {
            m[i] = b1 * m[i] + (T(1) - b1) * g[i];
            v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
            const T mhat = m[i] / c1, vhat = v[i] / c2;
            w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

template class Optimizer<float>;
template class Optimizer<double>;

}  // namespace kt::train
