#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "kt/tape.hpp"

// Differentiable primitives. Every function records onto the tape of its
// first argument; shape violations throw NumericError naming the op and the
// offending shapes.
namespace kt::num {

// Counter-based dropout mask source: element i of a site is kept iff
// hash(seed, stream, i) maps to a uniform >= rate. `stream` encodes the
// (epoch, batch, site) coordinates so masks are reproducible.
struct DropoutKey {
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
};

// a[..., m, k] x b[k, n] or a[..., m, k] x b[..., k, n] with equal leading dims.
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b);

// Numpy-style broadcasting (right-aligned; each dim equal or 1 in either).
template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> scale(const Var<T>& a, T factor);

// Swaps the last two dims.
template <typename T>
Var<T> transpose(const Var<T>& a);

// Over the last dim.
template <typename T>
Var<T> softmax(const Var<T>& a);

// Over the last dim, with learnable gain and bias of that size.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps);

// Tanh approximation.
template <typename T>
Var<T> gelu(const Var<T>& a);

template <typename T>
Var<T> tanh(const Var<T>& a);

// Gathers rows of table[V, H] -> [ids.size(), H].
template <typename T>
Var<T> embedding_lookup(const Var<T>& table, std::span<const std::int32_t> ids);

// Identity when !training or rate == 0; otherwise zeroes dropped elements
// and scales kept ones by 1/(1-rate).
template <typename T>
Var<T> dropout(const Var<T>& a, T rate, bool training, DropoutKey key);

// Mean over rows of -log softmax(logits[b])[labels[b]]; logits is [B, C].
template <typename T>
Var<T> cross_entropy(const Var<T>& logits, std::span<const int> labels);

// Structural helpers used to express multi-head attention.
template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape);

// [B, S, H] -> [B, A, S, H/A]
template <typename T>
Var<T> split_heads(const Var<T>& a, std::size_t heads);

// [B, A, S, D] -> [B, S, A*D]
template <typename T>
Var<T> merge_heads(const Var<T>& a);

// [B, S, H] -> [B, H], position `index` of every sequence.
template <typename T>
Var<T> select_position(const Var<T>& a, std::size_t index);

// Sum of all elements -> scalar (shape {1}).
template <typename T>
Var<T> sum(const Var<T>& a);

}  // namespace kt::num
