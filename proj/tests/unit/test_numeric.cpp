#include <doctest.h>

#include <cmath>

#include "kt/error.hpp"
#include "kt/gradcheck.hpp"
#include "kt/ops.hpp"
#include "kt/rng.hpp"

using namespace kt;
using namespace kt::num;

namespace {

Tensor<double> random_tensor(Shape shape, SplitMix64& rng, double scale = 1.0) {
    Tensor<double> t(std::move(shape));
    for (auto& v : t.data()) v = scale * rng.normal();
    return t;
}

// Reduces an op's output against fixed random weights so every output
// element contributes a distinct gradient.
Var<double> weighted(Tape<double>& tape, const Var<double>& y, std::uint64_t seed) {
    SplitMix64 rng(seed);
    return sum(mul(y, tape.constant(random_tensor(y.shape(), rng))));
}

double check(const std::function<Var<double>(Tape<double>&, const BoundParams&)>& f, const NamedTensors<double>& params) {
    std::set<std::string> all;
    for (const auto& [n, t] : params) all.insert(n);
    return grad_check(f, params, all, {1e-5, 0, 0, 0.0, false}).max_rel_error;
}

}  // namespace

TEST_SUITE("numeric") {

TEST_CASE("softmax of equal logits is uniform") {
    Tape<double> tape(false);
    const auto y = softmax(tape.constant(Tensor<double>({1, 2}, {0.0, 0.0})));
    CHECK(y.value()[0] == doctest::Approx(0.5));
    CHECK(y.value()[1] == doctest::Approx(0.5));
}

TEST_CASE("matmul by identity is the identity") {
    SplitMix64 rng(1);
    Tape<double> tape(false);
    const auto a = random_tensor({3, 4}, rng);
    Tensor<double> eye({4, 4});
    for (std::size_t i = 0; i < 4; ++i) eye[i * 4 + i] = 1.0;
    CHECK(matmul(tape.constant(a), tape.constant(eye)).value() == a);
}

TEST_CASE("cross entropy of uniform logits and its gradient") {
    Tape<double> tape;
    const auto logits = tape.parameter("logits", Tensor<double>({1, 2}, {0.0, 0.0}), true);
    const std::vector<int> label{1};
    const auto loss = cross_entropy(logits, std::span<const int>(label));
    CHECK(loss.value()[0] == doctest::Approx(0.693147).epsilon(1e-6));
    const auto g = tape.backward(loss);
    CHECK(g.at("logits")[0] == doctest::Approx(0.5));
    CHECK(g.at("logits")[1] == doctest::Approx(-0.5));
}

TEST_CASE("gradient of a sum of squares") {
    Tape<double> tape;
    const auto x = tape.parameter("x", Tensor<double>({3}, {1.0, 2.0, 3.0}), true);
    const auto g = tape.backward(sum(mul(x, x)));
    CHECK(g.at("x") == Tensor<double>({3}, {2.0, 4.0, 6.0}));
}

TEST_CASE("frozen tensors are absent from the gradient map") {
    Tape<double> tape;
    const auto x = tape.parameter("x", Tensor<double>({2}, {1.0, 2.0}), true);
    const auto w = tape.parameter("w", Tensor<double>({2}, {3.0, 4.0}), false);
    const auto g = tape.backward(sum(mul(x, w)));
    CHECK(g.count("x") == 1);
    CHECK(g.count("w") == 0);
    CHECK(g.at("x") == Tensor<double>({2}, {3.0, 4.0}));
}

TEST_CASE("fan-out accumulates gradients") {
    SplitMix64 rng(2);
    const auto x0 = random_tensor({5}, rng);
    auto grad_of = [&](bool twice) {
        Tape<double> tape;
        const auto x = tape.parameter("x", x0, true);
        const auto g1 = tanh(x);
        const auto y = twice ? add(g1, tanh(x)) : g1;
        return tape.backward(sum(y)).at("x");
    };
    const auto once = grad_of(false), twice = grad_of(true);
    for (std::size_t i = 0; i < 5; ++i) CHECK(twice[i] == doctest::Approx(2.0 * once[i]).epsilon(1e-14));
}

TEST_CASE("quadratic objective is checked to rounding") {
    SplitMix64 rng(3);
    const NamedTensors<double> p{{"x", random_tensor({6}, rng)}};
    const double err = check([](Tape<double>&, const BoundParams& b) { return sum(mul(b.at("x"), b.at("x"))); }, p);
    CHECK(err < 1e-8);
}

TEST_CASE("grad_check rejects a zero step") {
    const NamedTensors<double> p{{"x", Tensor<double>({1}, {1.0})}};
    auto f = [](Tape<double>&, const BoundParams& b) { return sum(b.at("x")); };
    CHECK_THROWS_AS(grad_check(f, p, {"x"}, {0.0}), NumericError);
}

TEST_CASE("every primitive matches central differences") {
    SplitMix64 rng(4);
    const NamedTensors<double> ab{{"a", random_tensor({2, 3, 4}, rng)}, {"b", random_tensor({4, 5}, rng)}};
    CHECK(check([](Tape<double>& t, const BoundParams& p) { return weighted(t, matmul(p.at("a"), p.at("b")), 1); }, ab) <
          1e-6);

    const NamedTensors<double> batched{{"a", random_tensor({2, 3, 4}, rng)}, {"b", random_tensor({2, 4, 3}, rng)}};
    CHECK(check([](Tape<double>& t, const BoundParams& p) { return weighted(t, matmul(p.at("a"), p.at("b")), 2); },
                batched) < 1e-6);

    const NamedTensors<double> bc{{"a", random_tensor({2, 3, 4}, rng)}, {"b", random_tensor({4}, rng)},
                                  {"c", random_tensor({2, 1, 4}, rng)}};
    CHECK(check([](Tape<double>& t, const BoundParams& p) {
              return weighted(t, add(mul(p.at("a"), p.at("b")), p.at("c")), 3);
          },
                bc) < 1e-6);

    const NamedTensors<double> x{{"x", random_tensor({2, 3, 4}, rng)}};
    CHECK(check([](Tape<double>& t, const BoundParams& p) { return weighted(t, softmax(p.at("x")), 4); }, x) < 1e-6);
    CHECK(check([](Tape<double>& t, const BoundParams& p) { return weighted(t, gelu(p.at("x")), 5); }, x) < 1e-6);
    CHECK(check([](Tape<double>& t, const BoundParams& p) { return weighted(t, tanh(p.at("x")), 6); }, x) < 1e-6);
    CHECK(check([](Tape<double>& t, const BoundParams& p) { return weighted(t, scale(p.at("x"), 0.3), 7); }, x) < 1e-6);
    CHECK(check([](Tape<double>& t, const BoundParams& p) { return weighted(t, transpose(p.at("x")), 8); }, x) < 1e-6);
    CHECK(check([](Tape<double>& t, const BoundParams& p) { return weighted(t, select_position(p.at("x"), 2), 9); }, x) <
          1e-6);
    CHECK(check([](Tape<double>& t, const BoundParams& p) { return weighted(t, reshape(p.at("x"), {6, 4}), 10); }, x) <
          1e-6);
    CHECK(check([](Tape<double>& t, const BoundParams& p) {
              return weighted(t, merge_heads(split_heads(p.at("x"), 2)), 11);
          },
                x) < 1e-6);
    CHECK(check([](Tape<double>& t, const BoundParams& p) {
              return weighted(t, dropout(p.at("x"), 0.4, true, {3, 9}), 12);
          },
                x) < 1e-6);

    const NamedTensors<double> ln{{"x", random_tensor({3, 5}, rng)}, {"g", random_tensor({5}, rng)},
                                  {"b", random_tensor({5}, rng)}};
    CHECK(check([](Tape<double>& t, const BoundParams& p) {
              return weighted(t, layer_norm(p.at("x"), p.at("g"), p.at("b"), 1e-12), 13);
          },
                ln) < 1e-6);

    const NamedTensors<double> emb{{"table", random_tensor({6, 3}, rng)}};
    const std::vector<std::int32_t> ids{4, 0, 4, 2};
    CHECK(check([&](Tape<double>& t, const BoundParams& p) {
              return weighted(t, embedding_lookup(p.at("table"), std::span<const std::int32_t>(ids)), 14);
          },
                emb) < 1e-6);

    const NamedTensors<double> logits{{"z", random_tensor({4, 2}, rng)}};
    const std::vector<int> labels{0, 1, 1, 0};
    CHECK(check([&](Tape<double>&, const BoundParams& p) {
              return cross_entropy(p.at("z"), std::span<const int>(labels));
          },
                logits) < 1e-6);
}

TEST_CASE("softmax rows sum to one and layer norm standardizes") {
    SplitMix64 rng(5);
    Tape<double> tape(false);
    const auto x = tape.constant(random_tensor({4, 7}, rng, 3.0));
    const auto s = softmax(x).value();
    for (std::size_t r = 0; r < 4; ++r) {
        double total = 0;
        for (std::size_t c = 0; c < 7; ++c) total += s[r * 7 + c];
        CHECK(std::abs(total - 1.0) < 1e-6);
    }
    const auto y = layer_norm(x, tape.constant(Tensor<double>({7}, 1.0)), tape.constant(Tensor<double>({7}, 0.0)), 1e-12)
                       .value();
    for (std::size_t r = 0; r < 4; ++r) {
        double mean = 0, var = 0;
        for (std::size_t c = 0; c < 7; ++c) mean += y[r * 7 + c] / 7;
        for (std::size_t c = 0; c < 7; ++c) var += (y[r * 7 + c] - mean) * (y[r * 7 + c] - mean) / 7;
        CHECK(std::abs(mean) < 1e-5);
        CHECK(std::abs(var - 1.0) < 1e-4);
    }
}

TEST_CASE("dropout is the identity at rate 0 or outside training") {
    SplitMix64 rng(6);
    Tape<double> tape(false);
    const auto x = random_tensor({3, 8}, rng);
    CHECK(dropout(tape.constant(x), 0.0, true, {1, 2}).value() == x);
    CHECK(dropout(tape.constant(x), 0.5, false, {1, 2}).value() == x);
}

TEST_CASE("dropout masks are keyed and scaled") {
    Tape<double> tape(false);
    const Tensor<double> ones({10000}, 1.0);
    const auto a = dropout(tape.constant(ones), 0.25, true, {7, 1}).value();
    const auto b = dropout(tape.constant(ones), 0.25, true, {7, 1}).value();
    const auto c = dropout(tape.constant(ones), 0.25, true, {7, 2}).value();
    CHECK(a == b);
    CHECK_FALSE(a == c);
    std::size_t kept = 0;
    for (double v : a.data()) {
        CHECK((v == 0.0 || std::abs(v - 1.0 / 0.75) < 1e-15));
        kept += v != 0.0;
    }
    CHECK(std::abs(static_cast<double>(kept) / 10000.0 - 0.75) < 0.02);
}

TEST_CASE("shape violations raise NumericError") {
    Tape<double> tape(false);
    const auto a = tape.constant(Tensor<double>({2, 3}));
    const auto b = tape.constant(Tensor<double>({2, 3}));
    CHECK_THROWS_AS(matmul(a, b), NumericError);
    CHECK_THROWS_AS(add(a, tape.constant(Tensor<double>({4}))), NumericError);
    CHECK_THROWS_AS(reshape(a, {5}), NumericError);
    const std::vector<int> bad{0, 3};
    CHECK_THROWS_AS(cross_entropy(a, std::span<const int>(bad)), NumericError);
}

TEST_CASE("tensor basics") {
    Tensor<float> t({2, 3}, 1.5f);
    CHECK(t.size() == 6);
    CHECK(t.rank() == 2);
    CHECK(t.all_finite());
    t[4] = std::nanf("");
    CHECK_FALSE(t.all_finite());
    CHECK(shape_str({2, 3}) == "[2,3]");
    CHECK(numel({}) == 1);
    CHECK_THROWS(Tensor<float>({2, 2}, std::vector<float>{1.0f}));
}

}  // TEST_SUITE
