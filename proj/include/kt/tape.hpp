#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "kt/tensor.hpp"

namespace kt::num {

template <typename T>
class Tape;

// Handle to a value recorded on a tape. Tracked values take part in
// backward; untracked ones (constants, frozen parameters and anything
// computed only from them) are plain values.
template <typename T>
class Var {
public:
    Var() = default;
    Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

    const Tensor<T>& value() const;
    const Shape& shape() const { return value().shape(); }
    bool tracked() const;
    std::size_t id() const noexcept { return id_; }
    Tape<T>& tape() const noexcept { return *tape_; }

private:
    Tape<T>* tape_ = nullptr;
    std::size_t id_ = 0;
};

template <typename T>
using GradientMap = std::map<std::string, Tensor<T>>;

// Parameters bound on a tape, by name.
template <typename T>
using BoundVars = std::map<std::string, Var<T>>;

// Records primitive applications in execution order. Backward replays them
// in exact reverse order, accumulating additively where a value fans out.
// A tape is confined to one thread and may run backward once.
template <typename T>
class Tape {
public:
    // Receives the gradient of the node's output and its value, and pushes
    // contributions to the inputs via accumulate().
    using BackwardFn = std::function<void(Tape&, const Tensor<T>& grad_out, const Tensor<T>& out)>;

    // A disabled tape never tracks anything; used for inference.
    explicit Tape(bool enabled = true) : enabled_(enabled) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var<T> constant(Tensor<T> value);
    Var<T> parameter(std::string name, Tensor<T> value, bool trainable);
    // Binds without copying; `value` must outlive the tape and stay unchanged.
    Var<T> parameter_ref(std::string name, const Tensor<T>& value, bool trainable);

    // Adds an op output. Tracked iff the tape is enabled and any input is
    // tracked; otherwise the closure is dropped. Throws NumericError naming
    // `op` when the output contains NaN or Inf.
    Var<T> record(const char* op, Tensor<T> out, std::initializer_list<Var<T>> inputs, BackwardFn fn);

    // Adds g to the gradient of v. No-op for untracked values.
    void accumulate(const Var<T>& v, const Tensor<T>& g);
    // Element-wise variant for in-place accumulation into v's gradient buffer.
    Tensor<T>* grad_buffer(const Var<T>& v);

    // Gradients for every trainable parameter reachable from `loss`.
    // Throws NumericError if the loss is not scalar or the tape was consumed.
    GradientMap<T> backward(const Var<T>& loss);

    bool enabled() const noexcept { return enabled_; }
    bool consumed() const noexcept { return consumed_; }
    std::size_t size() const noexcept { return nodes_.size(); }
    std::size_t tracked_count() const noexcept;
    const Tensor<T>& value(std::size_t id) const {
        const Node& n = nodes_.at(id);
        return n.external ? *n.external : n.value;
    }
    bool tracked(std::size_t id) const { return nodes_.at(id).tracked; }
    // Node ids whose backward closure ran, in the order they ran.
    const std::vector<std::size_t>& backward_order() const noexcept { return order_; }

private:
    struct Node {
        Tensor<T> value;
        const Tensor<T>* external = nullptr;
        bool tracked = false;
        std::string param_name;
        BackwardFn backward;
    };

    bool enabled_;
    bool consumed_ = false;
    std::deque<Node> nodes_;
    std::vector<Tensor<T>> grads_;
    std::vector<std::size_t> order_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
    return tape_->value(id_);
}

template <typename T>
bool Var<T>::tracked() const {
    return tape_->tracked(id_);
}

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace kt::num
