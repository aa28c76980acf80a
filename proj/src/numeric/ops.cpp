#include "kt/ops.hpp"

#include <algorithm>
#include <cmath>

#include "gemm.hpp"
#include "kt/error.hpp"
#include "kt/rng.hpp"

namespace kt::num {

namespace {

[[noreturn]] void shape_error(const char* op, const std::string& what) {
    throw NumericError(std::string(op) + ": " + what);
}

std::string shapes(const Shape& a, const Shape& b) {
    return shape_str(a) + " and " + shape_str(b);
}

// Broadcast geometry of two operands against their common output shape.
struct Broadcast {
    Shape out;
    std::vector<std::size_t> stride_a, stride_b;  // 0 on broadcast dims
};

Broadcast broadcast(const char* op, const Shape& a, const Shape& b) {
    const std::size_t rank = std::max(a.size(), b.size());
    Broadcast g;
    g.out.assign(rank, 1);
    std::vector<std::size_t> da(rank, 1), db(rank, 1);
    std::copy(a.begin(), a.end(), da.begin() + static_cast<std::ptrdiff_t>(rank - a.size()));
    std::copy(b.begin(), b.end(), db.begin() + static_cast<std::ptrdiff_t>(rank - b.size()));
    for (std::size_t i = 0; i < rank; ++i) {
        if (da[i] != db[i] && da[i] != 1 && db[i] != 1) shape_error(op, "cannot broadcast " + shapes(a, b));
        g.out[i] = std::max(da[i], db[i]);
    }
    g.stride_a.assign(rank, 0);
    g.stride_b.assign(rank, 0);
    std::size_t sa = 1, sb = 1;
    for (std::size_t i = rank; i-- > 0;) {
        g.stride_a[i] = da[i] == 1 ? 0 : sa;
        g.stride_b[i] = db[i] == 1 ? 0 : sb;
        sa *= da[i];
        sb *= db[i];
    }
    return g;
}

// Calls f(out_index, a_index, b_index) over the output in row-major order.
template <typename F>
void for_each_broadcast(const Broadcast& g, F&& f) {
    const std::size_t rank = g.out.size();
    const std::size_t total = numel(g.out);
    if (total == 0) return;
    const std::size_t inner = rank ? g.out.back() : 1;
    const std::size_t ia_step = rank ? g.stride_a.back() : 0;
    const std::size_t ib_step = rank ? g.stride_b.back() : 0;
    std::vector<std::size_t> idx(rank, 0);
    std::size_t ia = 0, ib = 0;
    for (std::size_t o = 0; o < total; o += inner) {
        for (std::size_t j = 0; j < inner; ++j) f(o + j, ia + j * ia_step, ib + j * ib_step);
        for (std::size_t d = rank - 1; d-- > 0;) {
            ++idx[d];
            ia += g.stride_a[d];
            ib += g.stride_b[d];
            if (idx[d] < g.out[d]) break;
            ia -= g.stride_a[d] * idx[d];
            ib -= g.stride_b[d] * idx[d];
            idx[d] = 0;
        }
    }
}

template <typename T>
void require_rank(const char* op, const Var<T>& v, std::size_t min_rank) {
    if (v.shape().size() < min_rank)
        shape_error(op, "expected rank >= " + std::to_string(min_rank) + ", got " + shape_str(v.shape()));
}

}  // namespace

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
    const char* op = "matmul";
    require_rank(op, a, 2);
    require_rank(op, b, 2);
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    const std::size_t m = sa[sa.size() - 2], k = sa.back();
    const std::size_t kb = sb[sb.size() - 2], n = sb.back();
    if (k != kb) shape_error(op, "inner dimensions differ: " + shapes(sa, sb));
    const bool shared = sb.size() == 2;
    const std::size_t batch = numel(sa) / (m * k);
    if (!shared) {
        if (sa.size() != sb.size() || !std::equal(sa.begin(), sa.end() - 2, sb.begin()))
            shape_error(op, "leading dimensions differ: " + shapes(sa, sb));
    }
    Shape so(sa.begin(), sa.end() - 1);
    so.push_back(n);
    Tensor<T> out(so);
    if (shared) {
        detail::gemm_nn(batch * m, n, k, a.value().ptr(), b.value().ptr(), out.ptr());
    } else {
        for (std::size_t i = 0; i < batch; ++i)
            detail::gemm_nn(m, n, k, a.value().ptr() + i * m * k, b.value().ptr() + i * k * n, out.ptr() + i * m * n);
    }
    return a.tape().record(op, std::move(out), {a, b},
                           [a, b, m, n, k, batch, shared](Tape<T>& tape, const Tensor<T>& g, const Tensor<T>&) {
                               if (auto* ga = tape.grad_buffer(a)) {
                                   if (shared) {
                                       detail::gemm_nt(batch * m, k, n, g.ptr(), b.value().ptr(), ga->ptr());
                                   } else {
                                       for (std::size_t i = 0; i < batch; ++i)
                                           detail::gemm_nt(m, k, n, g.ptr() + i * m * n, b.value().ptr() + i * k * n,
                                                           ga->ptr() + i * m * k);
                                   }
                               }
                               if (auto* gb = tape.grad_buffer(b)) {
                                   if (shared) {
                                       detail::gemm_tn(k, n, batch * m, a.value().ptr(), g.ptr(), gb->ptr());
                                   } else {
                                       for (std::size_t i = 0; i < batch; ++i)
                                           detail::gemm_tn(k, n, m, a.value().ptr() + i * m * k, g.ptr() + i * m * n,
                                                           gb->ptr() + i * k * n);
                                   }
                               }
                           });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    const char* op = "add";
    const Tensor<T>& av = a.value();
    const Tensor<T>& bv = b.value();
    if (av.shape() == bv.shape()) {
        Tensor<T> out(av.shape());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
        return a.tape().record(op, std::move(out), {a, b}, [a, b](Tape<T>& tape, const Tensor<T>& g, const Tensor<T>&) {
            tape.accumulate(a, g);
            tape.accumulate(b, g);
        });
    }
    auto geo = broadcast(op, av.shape(), bv.shape());
    Tensor<T> out(geo.out);
    const T* pa = av.ptr();
    const T* pb = bv.ptr();
    T* po = out.ptr();
    for_each_broadcast(geo, [&](std::size_t o, std::size_t ia, std::size_t ib) { po[o] = pa[ia] + pb[ib]; });
    return a.tape().record(op, std::move(out), {a, b},
                           [a, b, geo](Tape<T>& tape, const Tensor<T>& g, const Tensor<T>&) {
                               auto* ga = tape.grad_buffer(a);
                               auto* gb = tape.grad_buffer(b);
                               const T* pg = g.ptr();
                               T* qa = ga ? ga->ptr() : nullptr;
                               T* qb = gb ? gb->ptr() : nullptr;
                               for_each_broadcast(geo, [&](std::size_t o, std::size_t ia, std::size_t ib) {
                                   if (qa) qa[ia] += pg[o];
                                   if (qb) qb[ib] += pg[o];
                               });
                           });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    const char* op = "mul";
    const Tensor<T>& av = a.value();
    const Tensor<T>& bv = b.value();
    auto geo = broadcast(op, av.shape(), bv.shape());
    Tensor<T> out(geo.out);
    const T* pa = av.ptr();
    const T* pb = bv.ptr();
    T* po = out.ptr();
    for_each_broadcast(geo, [&](std::size_t o, std::size_t ia, std::size_t ib) { po[o] = pa[ia] * pb[ib]; });
    return a.tape().record(op, std::move(out), {a, b},
                           [a, b, geo](Tape<T>& tape, const Tensor<T>& g, const Tensor<T>&) {
                               auto* ga = tape.grad_buffer(a);
                               auto* gb = tape.grad_buffer(b);
                               const T* pa = a.value().ptr();
                               const T* pb = b.value().ptr();
                               const T* pg = g.ptr();
                               T* qa = ga ? ga->ptr() : nullptr;
                               T* qb = gb ? gb->ptr() : nullptr;
                               for_each_broadcast(geo, [&](std::size_t o, std::size_t ia, std::size_t ib) {
                                   if (qa) qa[ia] += pg[o] * pb[ib];
                                   if (qb) qb[ib] += pg[o] * pa[ia];
                               });
                           });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
    Tensor<T> out(a.shape());
    const auto& av = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
    return a.tape().record("scale", std::move(out), {a}, [a, factor](Tape<T>& tape, const Tensor<T>& g, const Tensor<T>&) {
        auto* ga = tape.grad_buffer(a);
        for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * factor;
    });
}

namespace {

template <typename T>
void transpose_last2(const T* src, T* dst, std::size_t batch, std::size_t rows, std::size_t cols) {
    for (std::size_t b = 0; b < batch; ++b) {
        const T* s = src + b * rows * cols;
        T* d = dst + b * rows * cols;
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) d[c * rows + r] = s[r * cols + c];
    }
}

}  // namespace

template <typename T>
Var<T> transpose(const Var<T>& a) {
    require_rank("transpose", a, 2);
    Shape s = a.shape();
    const std::size_t rows = s[s.size() - 2], cols = s.back();
    const std::size_t batch = numel(s) / (rows * cols);
    std::swap(s[s.size() - 2], s[s.size() - 1]);
    Tensor<T> out(s);
    transpose_last2(a.value().ptr(), out.ptr(), batch, rows, cols);
    return a.tape().record("transpose", std::move(out), {a},
                           [a, batch, rows, cols](Tape<T>& tape, const Tensor<T>& g, const Tensor<T>&) {
                               auto* ga = tape.grad_buffer(a);
                               // g is [.., cols, rows]; its transpose lands on a's layout.
                               for (std::size_t b = 0; b < batch; ++b) {
                                   const T* s = g.ptr() + b * rows * cols;
                                   T* d = ga->ptr() + b * rows * cols;
                                   for (std::size_t c = 0; c < cols; ++c)
                                       for (std::size_t r = 0; r < rows; ++r) d[r * cols + c] += s[c * rows + r];
                               }
                           });
}

template <typename T>
Var<T> softmax(const Var<T>& a) {
    require_rank("softmax", a, 1);
    const std::size_t n = a.shape().back();
    const std::size_t rows = a.value().size() / n;
    Tensor<T> out(a.shape());
    const T* x = a.value().ptr();
    T* y = out.ptr();
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = x + r * n;
        T* yr = y + r * n;
        const T mx = *std::max_element(xr, xr + n);
        T total = 0;
        for (std::size_t j = 0; j < n; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            total += yr[j];
        }
        for (std::size_t j = 0; j < n; ++j) yr[j] /= total;
    }
    return a.tape().record("softmax", std::move(out), {a}, [a, n, rows](Tape<T>& tape, const Tensor<T>& g, const Tensor<T>& out) {
        auto* ga = tape.grad_buffer(a);
        for (std::size_t r = 0; r < rows; ++r) {
            const T* yr = out.ptr() + r * n;
            const T* gr = g.ptr() + r * n;
            T* dr = ga->ptr() + r * n;
            T dot = 0;
            for (std::size_t j = 0; j < n; ++j) dot += gr[j] * yr[j];
            for (std::size_t j = 0; j < n; ++j) dr[j] += yr[j] * (gr[j] - dot);
        }
    });
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps) {
    const char* op = "layer_norm";
    require_rank(op, x, 1);
    const std::size_t n = x.shape().back();
    if (gain.shape() != Shape{n} || bias.shape() != Shape{n})
        shape_error(op, "gain/bias " + shapes(gain.shape(), bias.shape()) + " do not match last dim of " +
                            shape_str(x.shape()));
    const std::size_t rows = x.value().size() / n;
    std::vector<T> mean(rows), rstd(rows);
    Tensor<T> out(x.shape());
    const T* px = x.value().ptr();
    const T* pg = gain.value().ptr();
    const T* pb = bias.value().ptr();
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = px + r * n;
        T mu = 0;
        for (std::size_t j = 0; j < n; ++j) mu += xr[j];
        mu /= static_cast<T>(n);
        T var = 0;
        for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<T>(n);
        const T rs = T{1} / std::sqrt(var + eps);
        mean[r] = mu;
        rstd[r] = rs;
        T* yr = out.ptr() + r * n;
        for (std::size_t j = 0; j < n; ++j) yr[j] = (xr[j] - mu) * rs * pg[j] + pb[j];
    }
    return x.tape().record(
        op, std::move(out), {x, gain, bias},
        [x, gain, bias, n, rows, mean = std::move(mean), rstd = std::move(rstd)](Tape<T>& tape, const Tensor<T>& g,
                                                                                const Tensor<T>&) {
            auto* gx = tape.grad_buffer(x);
            auto* gg = tape.grad_buffer(gain);
            auto* gb = tape.grad_buffer(bias);
            const T* px = x.value().ptr();
            const T* pgain = gain.value().ptr();
            std::vector<T> xhat(n), dxhat(n);
            for (std::size_t r = 0; r < rows; ++r) {
                const T* xr = px + r * n;
                const T* gr = g.ptr() + r * n;
                T sum_d = 0, sum_dx = 0;
                for (std::size_t j = 0; j < n; ++j) {
                    xhat[j] = (xr[j] - mean[r]) * rstd[r];
                    dxhat[j] = gr[j] * pgain[j];
                    sum_d += dxhat[j];
                    sum_dx += dxhat[j] * xhat[j];
                }
                if (gg)
                    for (std::size_t j = 0; j < n; ++j) (*gg)[j] += gr[j] * xhat[j];
                if (gb)
                    for (std::size_t j = 0; j < n; ++j) (*gb)[j] += gr[j];
                if (gx) {
                    T* dr = gx->ptr() + r * n;
                    const T inv_n = T{1} / static_cast<T>(n);
                    for (std::size_t j = 0; j < n; ++j)
                        dr[j] += rstd[r] * (dxhat[j] - sum_d * inv_n - xhat[j] * sum_dx * inv_n);
                }
            }
        });
}

namespace {

template <typename T>
constexpr T kGeluC = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)

}  // namespace

template <typename T>
Var<T> gelu(const Var<T>& a) {
    Tensor<T> out(a.shape());
    const auto& x = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const T v = x[i];
        out[i] = T{0.5} * v * (T{1} + std::tanh(kGeluC<T> * (v + T{0.044715} * v * v * v)));
    }
    return a.tape().record("gelu", std::move(out), {a}, [a](Tape<T>& tape, const Tensor<T>& g, const Tensor<T>&) {
        auto* ga = tape.grad_buffer(a);
        const auto& x = a.value();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const T v = x[i];
            const T t = std::tanh(kGeluC<T> * (v + T{0.044715} * v * v * v));
            const T dinner = kGeluC<T> * (T{1} + T{3} * T{0.044715} * v * v);
            (*ga)[i] += g[i] * (T{0.5} * (T{1} + t) + T{0.5} * v * (T{1} - t * t) * dinner);
        }
    });
}

template <typename T>
Var<T> tanh(const Var<T>& a) {
    Tensor<T> out(a.shape());
    const auto& x = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x[i]);
    return a.tape().record("tanh", std::move(out), {a}, [a](Tape<T>& tape, const Tensor<T>& g, const Tensor<T>& y) {
        auto* ga = tape.grad_buffer(a);
        for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * (T{1} - y[i] * y[i]);
    });
}

template <typename T>
Var<T> embedding_lookup(const Var<T>& table, std::span<const std::int32_t> ids) {
    const char* op = "embedding_lookup";
    if (table.shape().size() != 2) shape_error(op, "table must be rank 2, got " + shape_str(table.shape()));
    const std::size_t rows = table.shape()[0], width = table.shape()[1];
    Tensor<T> out(Shape{ids.size(), width});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= rows)
            shape_error(op, "id " + std::to_string(ids[i]) + " outside table of " + std::to_string(rows) + " rows");
        std::copy_n(table.value().ptr() + static_cast<std::size_t>(ids[i]) * width, width, out.ptr() + i * width);
    }
    std::vector<std::int32_t> kept(ids.begin(), ids.end());
    return table.tape().record(op, std::move(out), {table},
                               [table, width, kept = std::move(kept)](Tape<T>& tape, const Tensor<T>& g, const Tensor<T>&) {
                                   auto* gt = tape.grad_buffer(table);
                                   for (std::size_t i = 0; i < kept.size(); ++i) {
                                       T* dst = gt->ptr() + static_cast<std::size_t>(kept[i]) * width;
                                       const T* src = g.ptr() + i * width;
                                       for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
                                   }
                               });
}

template <typename T>
Var<T> dropout(const Var<T>& a, T rate, bool training, DropoutKey key) {
    if (!(rate >= T{0} && rate < T{1})) throw NumericError("dropout: rate must lie in [0, 1)");
    if (!training || rate == T{0}) return a;
    const auto& x = a.value();
    const T keep_scale = T{1} / (T{1} - rate);
    std::vector<std::uint8_t> keep(x.size());
    Tensor<T> out(a.shape());
    const std::uint64_t base = hash_combine({key.seed, key.stream});
    for (std::size_t i = 0; i < x.size(); ++i) {
        keep[i] = to_unit(mix64(base ^ mix64(i))) >= static_cast<double>(rate) ? 1 : 0;
        out[i] = keep[i] ? x[i] * keep_scale : T{0};
    }
    return a.tape().record("dropout", std::move(out), {a},
                           [a, keep = std::move(keep), keep_scale](Tape<T>& tape, const Tensor<T>& g, const Tensor<T>&) {
                               auto* ga = tape.grad_buffer(a);
                               for (std::size_t i = 0; i < g.size(); ++i)
                                   if (keep[i]) (*ga)[i] += g[i] * keep_scale;
                           });
}

template <typename T>
Var<T> cross_entropy(const Var<T>& logits, std::span<const int> labels) {
    const char* op = "cross_entropy";
    if (logits.shape().size() != 2) shape_error(op, "logits must be [B, C], got " + shape_str(logits.shape()));
    const std::size_t rows = logits.shape()[0], classes = logits.shape()[1];
    if (labels.size() != rows)
        shape_error(op, std::to_string(labels.size()) + " labels for " + std::to_string(rows) + " rows");
    const T* x = logits.value().ptr();
    std::vector<T> probs(rows * classes);
    T total = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= classes)
            shape_error(op, "label " + std::to_string(labels[r]) + " outside [0, " + std::to_string(classes) + ")");
        const T* xr = x + r * classes;
        const T mx = *std::max_element(xr, xr + classes);
        T z = 0;
        for (std::size_t c = 0; c < classes; ++c) z += std::exp(xr[c] - mx);
        const T lse = mx + std::log(z);
        for (std::size_t c = 0; c < classes; ++c) probs[r * classes + c] = std::exp(xr[c] - lse);
        total += lse - xr[labels[r]];
    }
    Tensor<T> out(Shape{1}, total / static_cast<T>(rows));
    std::vector<int> kept(labels.begin(), labels.end());
    return logits.tape().record(op, std::move(out), {logits},
                                [logits, rows, classes, probs = std::move(probs), kept = std::move(kept)](
                                    Tape<T>& tape, const Tensor<T>& g, const Tensor<T>&) {
                                    auto* gl = tape.grad_buffer(logits);
                                    const T s = g[0] / static_cast<T>(rows);
                                    for (std::size_t r = 0; r < rows; ++r)
                                        for (std::size_t c = 0; c < classes; ++c) {
                                            const T onehot = static_cast<std::size_t>(kept[r]) == c ? T{1} : T{0};
                                            (*gl)[r * classes + c] += s * (probs[r * classes + c] - onehot);
                                        }
                                });
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
    if (numel(shape) != a.value().size())
        shape_error("reshape", "cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    return a.tape().record("reshape", a.value().reshaped(std::move(shape)), {a},
                           [a](Tape<T>& tape, const Tensor<T>& g, const Tensor<T>&) {
                               auto* ga = tape.grad_buffer(a);
                               for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
                           });
}

template <typename T>
Var<T> split_heads(const Var<T>& a, std::size_t heads) {
    const char* op = "split_heads";
    if (a.shape().size() != 3) shape_error(op, "expected [B, S, H], got " + shape_str(a.shape()));
    const std::size_t B = a.shape()[0], S = a.shape()[1], H = a.shape()[2];
    if (heads == 0 || H % heads != 0) shape_error(op, "hidden " + std::to_string(H) + " not divisible by heads");
    const std::size_t D = H / heads;
    Tensor<T> out(Shape{B, heads, S, D});
    const T* src = a.value().ptr();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t s = 0; s < S; ++s)
                std::copy_n(src + (b * S + s) * H + h * D, D, out.ptr() + ((b * heads + h) * S + s) * D);
    return a.tape().record(op, std::move(out), {a}, [a, B, S, H, D, heads](Tape<T>& tape, const Tensor<T>& g, const Tensor<T>&) {
        auto* ga = tape.grad_buffer(a);
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t h = 0; h < heads; ++h)
                for (std::size_t s = 0; s < S; ++s) {
                    const T* src = g.ptr() + ((b * heads + h) * S + s) * D;
                    T* dst = ga->ptr() + (b * S + s) * H + h * D;
                    for (std::size_t d = 0; d < D; ++d) dst[d] += src[d];
                }
    });
}

template <typename T>
Var<T> merge_heads(const Var<T>& a) {
    const char* op = "merge_heads";
    if (a.shape().size() != 4) shape_error(op, "expected [B, A, S, D], got " + shape_str(a.shape()));
    const std::size_t B = a.shape()[0], heads = a.shape()[1], S = a.shape()[2], D = a.shape()[3];
    const std::size_t H = heads * D;
    Tensor<T> out(Shape{B, S, H});
    const T* src = a.value().ptr();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t s = 0; s < S; ++s)
                std::copy_n(src + ((b * heads + h) * S + s) * D, D, out.ptr() + (b * S + s) * H + h * D);
    return a.tape().record(op, std::move(out), {a}, [a, B, S, H, D, heads](Tape<T>& tape, const Tensor<T>& g, const Tensor<T>&) {
        auto* ga = tape.grad_buffer(a);
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t h = 0; h < heads; ++h)
                for (std::size_t s = 0; s < S; ++s) {
                    const T* src = g.ptr() + (b * S + s) * H + h * D;
                    T* dst = ga->ptr() + ((b * heads + h) * S + s) * D;
                    for (std::size_t d = 0; d < D; ++d) dst[d] += src[d];
                }
    });
}

template <typename T>
Var<T> select_position(const Var<T>& a, std::size_t index) {
    const char* op = "select_position";
    if (a.shape().size() != 3) shape_error(op, "expected [B, S, H], got " + shape_str(a.shape()));
    const std::size_t B = a.shape()[0], S = a.shape()[1], H = a.shape()[2];
    if (index >= S) shape_error(op, "position " + std::to_string(index) + " outside sequence of " + std::to_string(S));
    Tensor<T> out(Shape{B, H});
    for (std::size_t b = 0; b < B; ++b) std::copy_n(a.value().ptr() + (b * S + index) * H, H, out.ptr() + b * H);
    return a.tape().record(op, std::move(out), {a}, [a, B, S, H, index](Tape<T>& tape, const Tensor<T>& g, const Tensor<T>&) {
        auto* ga = tape.grad_buffer(a);
        for (std::size_t b = 0; b < B; ++b) {
            T* dst = ga->ptr() + (b * S + index) * H;
            for (std::size_t h = 0; h < H; ++h) dst[h] += g[b * H + h];
        }
    });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
    T total = 0;
    for (T v : a.value().data()) total += v;
    return a.tape().record("sum", Tensor<T>(Shape{1}, total), {a}, [a](Tape<T>& tape, const Tensor<T>& g, const Tensor<T>&) {
        auto* ga = tape.grad_buffer(a);
        for (auto& v : ga->data()) v += g[0];
    });
}

#define KT_INSTANTIATE_OPS(T)                                                                \
    template Var<T> matmul<T>(const Var<T>&, const Var<T>&);                                 \
    template Var<T> add<T>(const Var<T>&, const Var<T>&);                                    \
    template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                    \
    template Var<T> scale<T>(const Var<T>&, T);                                              \
    template Var<T> transpose<T>(const Var<T>&);                                             \
    template Var<T> softmax<T>(const Var<T>&);                                               \
    template Var<T> layer_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&, T);           \
    template Var<T> gelu<T>(const Var<T>&);                                                  \
    template Var<T> tanh<T>(const Var<T>&);                                                  \
    template Var<T> embedding_lookup<T>(const Var<T>&, std::span<const std::int32_t>);       \
    template Var<T> dropout<T>(const Var<T>&, T, bool, DropoutKey);                          \
    template Var<T> cross_entropy<T>(const Var<T>&, std::span<const int>);                   \
    template Var<T> reshape<T>(const Var<T>&, Shape);                                        \
    template Var<T> split_heads<T>(const Var<T>&, std::size_t);                              \
    template Var<T> merge_heads<T>(const Var<T>&);                                           \
    template Var<T> select_position<T>(const Var<T>&, std::size_t);                          \
    template Var<T> sum<T>(const Var<T>&);

KT_INSTANTIATE_OPS(float)
KT_INSTANTIATE_OPS(double)

}  // namespace kt::num
