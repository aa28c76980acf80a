#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <filesystem>

#include "kt/archive.hpp"
#include "kt/encoder.hpp"
#include "kt/error.hpp"
#include "kt/gradcheck.hpp"
#include "kt/ops.hpp"
#include "support.hpp"

using namespace kt;
using namespace kt::enc;

namespace {

std::size_t count_of(const std::vector<std::string>& names, const ModelConfig& cfg) {
    std::size_t n = 0;
    for (const auto& [name, shape] : parameter_layout(cfg))
        if (std::find(names.begin(), names.end(), name) != names.end()) n += num::numel(shape);
    return n;
}

std::vector<tok::TokenSequence> toy_batch(std::size_t n, std::uint64_t seed, std::size_t max_len = 16) {
    const auto vocab = test::synthetic_vocab();
    return tok::tokenize_all(test::toy_data(n, seed).texts(), vocab, {max_len, true, 100});
}

const FreezeVariant kVariants[] = {FreezeVariant::nn1_head_only, FreezeVariant::nn2_last_layer,
                                   FreezeVariant::nn3_last_two_layers};

}  // namespace

TEST_SUITE("encoder") {

TEST_CASE("toy NN1 trains 90 scalars") {
    const auto cfg = test::toy_cfg();
    const auto names = trainable_params(cfg, {FreezeVariant::nn1_head_only});
    CHECK(names == std::vector<std::string>{"pooler.weight", "pooler.bias", "classifier.weight", "classifier.bias"});
    CHECK(count_of(names, cfg) == 90);
}

TEST_CASE("trainable sets nest by layer") {
    ModelConfig full;
    const auto nn2 = trainable_set(full, {FreezeVariant::nn2_last_layer});
    const auto nn3 = trainable_set(full, {FreezeVariant::nn3_last_two_layers});
    std::vector<std::string> diff;
    std::set_difference(nn3.begin(), nn3.end(), nn2.begin(), nn2.end(), std::back_inserter(diff));
    CHECK(diff.size() == 16);
    for (const auto& n : diff) CHECK(n.rfind("layer.11.", 0) == 0);
    for (const auto& n : nn2) CHECK((n.rfind("layer.12.", 0) == 0 || n.rfind("pooler.", 0) == 0 || n.rfind("classifier.", 0) == 0));
    CHECK(FreezeConfig{FreezeVariant::nn3_last_two_layers}.first_unfrozen_layer(full) == 11);
    CHECK(FreezeConfig{FreezeVariant::nn1_head_only}.first_unfrozen_layer(full) == 13);
}

TEST_CASE("full-scale parameter budget") {
    ModelConfig full;
    std::size_t total = 0;
    for (const auto& [name, shape] : parameter_layout(full)) total += num::numel(shape);
    CHECK(total > 100'000'000);
    CHECK(total < 115'000'000);
    CHECK(count_of(trainable_params(full, {FreezeVariant::nn1_head_only}), full) < total / 100);
}

TEST_CASE("canonical layout names and shapes") {
    const auto cfg = test::toy_cfg();
    const auto layout = parameter_layout(cfg);
    CHECK(layout.front().first == "embeddings.word");
    CHECK(layout.front().second == num::Shape{cfg.vocab_size, 8});
    CHECK(layout.back().first == "classifier.bias");
    CHECK(layout.size() == 5 + 16 * 2 + 4);
    const auto params = init_params(cfg, 1);
    CHECK(params.at("layer.2.ffn.intermediate.weight").shape() == num::Shape{8, 16});
    CHECK(params.at("layer.1.attention.norm.gain")[0] == 1.0f);
    CHECK(params.at("classifier.weight").shape() == num::Shape{8, 2});
    CHECK_NOTHROW(validate_params(params, cfg));
    auto missing = params;
    missing.erase("pooler.bias");
    CHECK_THROWS_AS(validate_params(missing, cfg), DataError);
    auto extra = params;
    extra.emplace("cls.predictions.bias", num::Tensor<float>({3}));
    CHECK_THROWS_AS(validate_params(extra, cfg), DataError);
}

TEST_CASE("init is seeded, truncated, and rejects a non-positive scale") {
    const auto cfg = test::toy_cfg();
    const auto a = init_params(cfg, 4), b = init_params(cfg, 4), c = init_params(cfg, 5);
    CHECK(a == b);
    CHECK_FALSE(a == c);
    for (float v : a.at("embeddings.word").data()) CHECK(std::abs(v) <= 0.04f + 1e-7f);
    CHECK_THROWS_AS(init_params(cfg, 1, 0.0), UsageError);
}

TEST_CASE("config json round trip") {
    auto cfg = test::toy_cfg();
    cfg.lowercase = false;
    cfg.classifier_dropout = 0.25;
    CHECK(ModelConfig::from_json(cfg.to_json()) == cfg);
    auto bad = cfg;
    bad.heads = 3;
    CHECK_THROWS_AS(bad.validate(), DataError);
}

TEST_CASE("logits shape and inference determinism") {
    const auto cfg = test::toy_cfg();
    const auto params = init_params(cfg, 2);
    const auto batch = toy_batch(2, 1);
    const auto a = infer_logits(params, cfg, batch), b = infer_logits(params, cfg, batch);
    CHECK(a.shape() == num::Shape{2, 2});
    CHECK(a == b);
}

TEST_CASE("a zero classifier gives zero logits") {
    const auto cfg = test::toy_cfg();
    auto params = init_params(cfg, 2);
    for (auto* n : {"classifier.weight", "classifier.bias"})
        std::fill(params.at(n).data().begin(), params.at(n).data().end(), 0.0f);
    const auto logits = infer_logits(params, cfg, toy_batch(3, 2));
    for (float v : logits.data()) CHECK(v == 0.0f);
}

TEST_CASE("attention rows sum to one and ignore padding") {
    const auto cfg = test::toy_cfg();
    const auto params = init_params(cfg, 3, 0.5);
    const auto batch = toy_batch(4, 3, 16);
    const auto maps = attention_maps(params, cfg, batch);
    REQUIRE(maps.size() == cfg.layers);
    const std::size_t S = 16;
    for (const auto& m : maps) {
        REQUIRE(m.shape() == num::Shape{4, cfg.heads, S, S});
        for (std::size_t b = 0; b < 4; ++b)
            for (std::size_t h = 0; h < cfg.heads; ++h)
                for (std::size_t i = 0; i < S; ++i) {
                    double total = 0;
                    for (std::size_t j = 0; j < S; ++j) {
                        const float w = m[((b * cfg.heads + h) * S + i) * S + j];
                        if (batch[b].mask[j]) total += w;
                        else CHECK(w < 1e-6f);
                    }
                    CHECK(std::abs(total - 1.0) < 1e-5);
                }
    }
}

TEST_CASE("permuting a batch permutes its logits") {
    const auto cfg = test::toy_cfg();
    const auto params = init_params(cfg, 4, 0.3);
    auto batch = toy_batch(5, 4);
    const auto base = infer_logits(params, cfg, batch);
    const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
    std::vector<tok::TokenSequence> shuffled;
    for (auto i : perm) shuffled.push_back(batch[i]);
    const auto out = infer_logits(params, cfg, shuffled);
    for (std::size_t k = 0; k < perm.size(); ++k)
        for (std::size_t c = 0; c < 2; ++c) CHECK(out[k * 2 + c] == doctest::Approx(base[perm[k] * 2 + c]).epsilon(1e-6));
}

TEST_CASE("trimming shared padding leaves logits unchanged") {
    const auto cfg = test::toy_cfg();
    const auto params = init_params(cfg, 5, 0.3);
    auto batch = toy_batch(4, 5, 40);
    const auto full = infer_logits(params, cfg, batch);
    tok::trim_padding(batch);
    CHECK(batch.front().length() < 40);
    const auto trimmed = infer_logits(params, cfg, batch);
    for (std::size_t i = 0; i < full.size(); ++i) CHECK(trimmed[i] == doctest::Approx(full[i]).epsilon(1e-5));
}

TEST_CASE("a cached frozen prefix reproduces the full forward") {
    const auto cfg = test::toy_cfg();
    const auto params = init_params(cfg, 6, 0.3);
    const auto batch = toy_batch(3, 6);
    const auto full = infer_logits(params, cfg, batch);
    const auto packed = pack(batch, cfg);
    for (std::size_t from = 1; from <= cfg.layers + 1; ++from) {
        const auto hidden = frozen_prefix(params, cfg, batch, from - 1);
        num::Tape<float> tape(false);
        const auto p = bind(tape, params, {});
        const auto logits = forward_from(tape, p, cfg, hidden, packed, from).value();
        for (std::size_t i = 0; i < full.size(); ++i) CHECK(logits[i] == doctest::Approx(full[i]).epsilon(1e-6));
    }
    num::Tape<float> tape(false);
    const auto p = bind(tape, params, {});
    CHECK_THROWS(forward_from(tape, p, cfg, frozen_prefix(params, cfg, batch, 0), packed, cfg.layers + 2));
}

TEST_CASE("dropout changes training logits but not inference ones") {
    const auto cfg = test::toy_cfg();
    const auto params = init_params(cfg, 7, 0.3);
    const auto batch = toy_batch(3, 7);
    auto run = [&](ForwardOptions o) {
        num::Tape<float> tape(false);
        return forward(tape, bind(tape, params, {}), cfg, std::span<const tok::TokenSequence>(batch), o).value();
    };
    const auto inference = run({});
    const auto a = run({true, 1, 11, 0}), b = run({true, 1, 11, 0}), c = run({true, 1, 11, 1});
    CHECK(a == b);
    CHECK_FALSE(a == c);
    CHECK_FALSE(a == inference);
}

TEST_CASE("pack rejects malformed batches") {
    const auto cfg = test::toy_cfg();
    CHECK_THROWS_AS(pack({}, cfg), DataError);
    auto batch = toy_batch(2, 8);
    batch[1].ids.push_back(0);
    batch[1].mask.push_back(0);
    CHECK_THROWS_AS(pack(batch, cfg), DataError);
    auto bad_id = toy_batch(2, 8);
    bad_id[0].ids[1] = static_cast<tok::TokenId>(cfg.vocab_size);
    CHECK_THROWS_AS(pack(bad_id, cfg), DataError);
    const auto too_long = toy_batch(2, 8, cfg.max_positions + 1);
    CHECK_THROWS_AS(pack(too_long, cfg), DataError);
    const auto packed = pack(toy_batch(2, 9), cfg);
    CHECK(packed.mask_bias.size() == 2 * packed.seq_len);
}

TEST_CASE("probed gradient check on a one-layer model") {
    const auto cfg = toy_config(test::synthetic_vocab().size(), 1, 8, 2, 16, 16);
    auto params = num::cast_all<double>(init_params(cfg, 7));
    for (auto& [n, t] : params)
        if (t.rank() == 2)
            for (auto& v : t.data()) v *= 25.0;
    const auto batch = toy_batch(4, 10);
    const std::vector<int> labels{0, 1, 1, 0};
    num::Objective f = [&](num::Tape<double>& tape, const num::BoundParams& p) {
        const auto logits = forward(tape, p, cfg, std::span<const tok::TokenSequence>(batch));
        return num::cross_entropy(logits, std::span<const int>(labels));
    };
    num::GradCheckOptions opts;
    opts.step = 1e-4;
    opts.richardson = true;
    opts.probes_per_tensor = 10;
    opts.seed = 3;
    opts.zero_tolerance = 1e-10;
    const auto r = num::grad_check(f, params, trainable_set(cfg, {FreezeVariant::nn2_last_layer}), opts);
    CHECK(r.max_rel_error < 1e-6);
    for (const auto& [name, zeros] : r.zeros_per_tensor)
        if (zeros > 0) CHECK(name.find("attention.key.bias") != std::string::npos);
}

TEST_CASE("archive round trip is bitwise") {
    test::TempDir dir;
    auto cfg = test::toy_cfg();
    cfg.classifier_dropout = 0.2;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto params = init_params(cfg, seed);
        save_archive(params, cfg, dir / "m.nta");
        const auto back = load_archive(dir / "m.nta");
        CHECK(back.config == cfg);
        REQUIRE(back.params.size() == params.size());
        for (const auto& [name, t] : params) {
            const auto& u = back.params.at(name);
            REQUIRE(u.shape() == t.shape());
            CHECK(std::memcmp(u.ptr(), t.ptr(), t.size() * sizeof(float)) == 0);
        }
    }
}

TEST_CASE("archive header layout") {
    test::TempDir dir;
    const auto cfg = test::toy_cfg();
    save_archive(init_params(cfg, 1), cfg, dir / "m.nta");
    const auto bytes = test::read_file(dir / "m.nta");
    REQUIRE(bytes.size() > 16);
    CHECK(bytes.substr(0, 4) == "NTA1");
    std::uint32_t version = 0;
    std::uint64_t header = 0;
    std::memcpy(&version, bytes.data() + 4, 4);
    std::memcpy(&header, bytes.data() + 8, 8);
    CHECK(version == kArchiveVersion);
    const auto j = nlohmann::json::parse(bytes.substr(16, header));
    CHECK(j.at("tensors").size() == parameter_layout(cfg).size());
    CHECK(j.at("tensors")[0].at("name") == "embeddings.word");
    CHECK(j.at("tensors")[0].at("dtype") == "f32");
    CHECK(j.at("config").at("hidden") == 8);
    const std::size_t data_start = (16 + header + 7) / 8 * 8;
    std::size_t expected = data_start;
    for (const auto& t : j.at("tensors")) {
        CHECK(t.at("offset").get<std::size_t>() % 8 == 0);
        std::size_t n = 1;
        for (auto d : t.at("shape")) n *= d.get<std::size_t>();
        expected = std::max(expected, data_start + t.at("offset").get<std::size_t>() + 4 * n);
    }
    CHECK(bytes.size() == expected);
}

TEST_CASE("corrupt archives are rejected by kind") {
    test::TempDir dir;
    const auto cfg = test::toy_cfg();
    save_archive(init_params(cfg, 1), cfg, dir / "m.nta");
    const auto good = test::read_file(dir / "m.nta");
    auto expect = [&](const std::string& bytes, ArchiveErrorKind kind, const char* text) {
        test::write_file(dir / "bad.nta", bytes);
        try {
            load_archive(dir / "bad.nta");
            FAIL("archive loaded");
        } catch (const ArchiveError& e) {
            CHECK(e.kind() == kind);
            CHECK(std::string(e.what()).find(text) != std::string::npos);
        }
    };
    auto magic = good;
    magic[0] = 'X';
    expect(magic, ArchiveErrorKind::bad_magic, "bad magic");
    auto version = good;
    version[4] = 2;
    expect(version, ArchiveErrorKind::version_mismatch, "version mismatch");
    expect(good.substr(0, good.size() - 3), ArchiveErrorKind::truncated, "truncated");
    expect(good.substr(0, 10), ArchiveErrorKind::truncated, "truncated");
    expect(good + "xxxx", ArchiveErrorKind::inconsistent, "trailing bytes");
    auto dtype = good;
    dtype.replace(dtype.find("\"f32\""), 5, "\"f64\"");
    expect(dtype, ArchiveErrorKind::inconsistent, "dtype f64");
    CHECK_THROWS_AS(load_archive(dir / "absent.nta"), ArchiveError);
    auto params = init_params(cfg, 1);
    params.erase("classifier.bias");
    CHECK_THROWS_AS(save_archive(params, cfg, dir / "x.nta"), DataError);
}

}  // TEST_SUITE
