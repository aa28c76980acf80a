#include "kt/tape.hpp"

#include "kt/error.hpp"

namespace kt::num {

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
    nodes_.push_back(Node{std::move(value), nullptr, false, {}, {}});
    return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::parameter(std::string name, Tensor<T> value, bool trainable) {
    if (!value.all_finite()) throw NumericError("parameter '" + name + "' contains non-finite values");
    nodes_.push_back(Node{std::move(value), nullptr, enabled_ && trainable, std::move(name), {}});
    return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::parameter_ref(std::string name, const Tensor<T>& value, bool trainable) {
    nodes_.push_back(Node{Tensor<T>{}, &value, enabled_ && trainable, std::move(name), {}});
    return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::record(const char* op, Tensor<T> out, std::initializer_list<Var<T>> inputs, BackwardFn fn) {
    if (consumed_) throw NumericError(std::string(op) + ": tape already consumed by backward");
    if (!out.all_finite()) throw NumericError(std::string(op) + ": non-finite output of shape " + shape_str(out.shape()));
    bool tracked = false;
    if (enabled_)
        for (const auto& v : inputs) tracked = tracked || v.tracked();
    nodes_.push_back(Node{std::move(out), nullptr, tracked, {}, tracked ? std::move(fn) : BackwardFn{}});
    return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Tensor<T>* Tape<T>::grad_buffer(const Var<T>& v) {
    if (!tracked(v.id())) return nullptr;
    auto& g = grads_.at(v.id());
    if (g.empty()) g = Tensor<T>(value(v.id()).shape());
    return &g;
}

template <typename T>
void Tape<T>::accumulate(const Var<T>& v, const Tensor<T>& g) {
    Tensor<T>* buf = grad_buffer(v);
    if (!buf) return;
    if (g.size() != buf->size())
        throw NumericError("gradient shape " + shape_str(g.shape()) + " does not match value " + shape_str(buf->shape()));
    T* dst = buf->ptr();
    const T* src = g.ptr();
    for (std::size_t i = 0, n = g.size(); i < n; ++i) dst[i] += src[i];
}

template <typename T>
GradientMap<T> Tape<T>::backward(const Var<T>& loss) {
    if (consumed_) throw NumericError("backward: tape already consumed");
    if (nodes_.empty()) throw NumericError("backward: empty tape");
    if (loss.value().size() != 1) throw NumericError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    consumed_ = true;
    grads_.assign(nodes_.size(), Tensor<T>{});
    order_.clear();
    if (tracked(loss.id())) grads_[loss.id()] = Tensor<T>(loss.shape(), T{1});

    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        Node& node = nodes_[i];
        if (!node.tracked || grads_[i].empty()) continue;
        if (node.backward) {
            order_.push_back(i);
            node.backward(*this, grads_[i], value(i));
            // Interior gradients are dead once propagated.
            grads_[i] = Tensor<T>{};
        }
    }

    GradientMap<T> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        Node& node = nodes_[i];
        if (!node.tracked || node.param_name.empty()) continue;
        Tensor<T> g = grads_[i].empty() ? Tensor<T>(value(i).shape()) : std::move(grads_[i]);
        auto [it, inserted] = out.emplace(node.param_name, std::move(g));
        if (!inserted) throw NumericError("backward: parameter '" + node.param_name + "' registered twice");
    }
    grads_.clear();
    return out;
}

template <typename T>
std::size_t Tape<T>::tracked_count() const noexcept {
    std::size_t n = 0;
    for (const auto& node : nodes_) n += node.tracked ? 1 : 0;
    return n;
}

template class Tape<float>;
template class Tape<double>;

}  // namespace kt::num
