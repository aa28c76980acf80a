#include "kt/tensor.hpp"

#include <cmath>
#include <sstream>

#include "kt/error.hpp"

namespace kt::num {

std::string shape_str(const Shape& s) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < s.size(); ++i) out << (i ? "," : "") << s[i];
    out << ']';
    return out.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), data_(numel(shape_), fill) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != numel(shape_))
        throw NumericError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                           shape_str(shape_));
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
    if (numel(shape) != data_.size())
        throw NumericError("reshape " + shape_str(shape_) + " -> " + shape_str(shape) + ": element count differs");
    return Tensor(std::move(shape), data_);
}

template <typename T>
bool Tensor<T>::all_finite() const noexcept {
    for (T v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace kt::num
