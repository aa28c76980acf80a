#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "kt/encoder.hpp"
#include "kt/error.hpp"
#include "kt/rng.hpp"

namespace kt::enc {

void ModelConfig::validate() const {
    auto fail = [](const std::string& what) { throw DataError("model config: " + what); };
    if (layers < 1) fail("layers must be >= 1");
    if (hidden < 1 || heads < 1) fail("hidden and heads must be positive");
    if (hidden % heads != 0) fail("hidden (" + std::to_string(hidden) + ") not divisible by heads (" + std::to_string(heads) + ")");
    if (ffn < 1) fail("ffn must be positive");
    if (vocab_size < 4) fail("vocab_size must cover the special tokens");
    if (type_vocab_size < 1) fail("type_vocab_size must be positive");
    if (max_len < 2) fail("max_len must be >= 2");
    if (max_positions < max_len) fail("max_positions (" + std::to_string(max_positions) + ") < max_len (" + std::to_string(max_len) + ")");
    if (!(layer_norm_eps > 0.0)) fail("layer_norm_eps must be positive");
    if (!(hidden_dropout >= 0.0 && hidden_dropout < 1.0)) fail("hidden_dropout must lie in [0, 1)");
    if (!(classifier_dropout >= 0.0 && classifier_dropout < 1.0)) fail("classifier_dropout must lie in [0, 1)");
}

nlohmann::json ModelConfig::to_json() const {
    return nlohmann::json{{"layers", layers},
                          {"hidden", hidden},
                          {"heads", heads},
                          {"ffn", ffn},
                          {"vocab_size", vocab_size},
                          {"max_positions", max_positions},
                          {"type_vocab_size", type_vocab_size},
                          {"layer_norm_eps", layer_norm_eps},
                          {"hidden_dropout", hidden_dropout},
                          {"classifier_dropout", classifier_dropout},
                          {"lowercase", lowercase},
                          {"max_len", max_len}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    try {
        c.layers = j.at("layers").get<std::size_t>();
        c.hidden = j.at("hidden").get<std::size_t>();
        c.heads = j.at("heads").get<std::size_t>();
        c.ffn = j.at("ffn").get<std::size_t>();
        c.vocab_size = j.at("vocab_size").get<std::size_t>();
        c.max_positions = j.at("max_positions").get<std::size_t>();
        c.type_vocab_size = j.value("type_vocab_size", std::size_t{2});
        c.layer_norm_eps = j.value("layer_norm_eps", 1e-12);
        c.hidden_dropout = j.value("hidden_dropout", 0.1);
        c.classifier_dropout = j.value("classifier_dropout", 0.15);
        c.lowercase = j.value("lowercase", true);
        c.max_len = j.value("max_len", std::size_t{128});
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("model config: ") + e.what());
    }
    c.validate();
    return c;
}

ModelConfig toy_config(std::size_t vocab_size, std::size_t layers, std::size_t hidden, std::size_t heads, std::size_t ffn,
                       std::size_t max_len) {
    ModelConfig c;
    c.layers = layers;
    c.hidden = hidden;
    c.heads = heads;
    c.ffn = ffn;
    c.vocab_size = vocab_size;
    c.max_len = max_len;
    c.max_positions = std::max<std::size_t>(max_len, 64);
    c.validate();
    return c;
}

void save_config(const ModelConfig& cfg, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << cfg.to_json().dump(2) << '\n';
}

ModelConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return ModelConfig::from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

std::string layer_prefix(std::size_t layer) {
    return "layer." + std::to_string(layer) + ".";
}

std::vector<std::pair<std::string, num::Shape>> parameter_layout(const ModelConfig& c) {
    const std::size_t H = c.hidden, F = c.ffn;
    std::vector<std::pair<std::string, num::Shape>> out = {
        {"embeddings.word", {c.vocab_size, H}},
        {"embeddings.position", {c.max_positions, H}},
        {"embeddings.token_type", {c.type_vocab_size, H}},
        {"embeddings.norm.gain", {H}},
        {"embeddings.norm.bias", {H}},
    };
    for (std::size_t l = 1; l <= c.layers; ++l) {
        const std::string p = layer_prefix(l);
        for (const char* proj : {"query", "key", "value", "output"}) {
            out.push_back({p + "attention." + proj + ".weight", {H, H}});
            out.push_back({p + "attention." + proj + ".bias", {H}});
        }
        out.push_back({p + "attention.norm.gain", {H}});
        out.push_back({p + "attention.norm.bias", {H}});
        out.push_back({p + "ffn.intermediate.weight", {H, F}});
        out.push_back({p + "ffn.intermediate.bias", {F}});
        out.push_back({p + "ffn.output.weight", {F, H}});
        out.push_back({p + "ffn.output.bias", {H}});
        out.push_back({p + "ffn.norm.gain", {H}});
        out.push_back({p + "ffn.norm.bias", {H}});
    }
    out.push_back({"pooler.weight", {H, H}});
    out.push_back({"pooler.bias", {H}});
    out.push_back({"classifier.weight", {H, 2}});
    out.push_back({"classifier.bias", {2}});
    return out;
}

std::vector<std::string> parameter_names(const ModelConfig& cfg) {
    std::vector<std::string> names;
    for (auto& [name, shape] : parameter_layout(cfg)) names.push_back(name);
    return names;
}

void validate_params(const ModelParams& params, const ModelConfig& cfg) {
    const auto layout = parameter_layout(cfg);
    for (const auto& [name, shape] : layout) {
        auto it = params.find(name);
        if (it == params.end()) throw DataError("model parameters lack tensor '" + name + "'");
        if (it->second.shape() != shape)
            throw DataError("tensor '" + name + "' has shape " + num::shape_str(it->second.shape()) + ", expected " +
                            num::shape_str(shape));
    }
    if (params.size() != layout.size()) {
        for (const auto& [name, t] : params) {
            bool known = false;
            for (const auto& entry : layout) known = known || entry.first == name;
            if (!known) throw DataError("unexpected tensor '" + name + "' for this configuration");
        }
    }
}

std::size_t parameter_count(const ModelParams& params) {
    std::size_t n = 0;
    for (const auto& [name, t] : params) n += t.size();
    return n;
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed, double sigma) {
    cfg.validate();
    if (!(sigma > 0.0)) throw UsageError("init: sigma must be positive");
    ModelParams params;
    std::uint64_t index = 0;
    for (const auto& [name, shape] : parameter_layout(cfg)) {
        num::Tensor<float> t(shape);
        SplitMix64 rng(hash_combine({seed, index++}));
        if (ends_with(name, ".gain")) {
            std::fill(t.data().begin(), t.data().end(), 1.0f);
        } else if (shape.size() == 2) {
            for (auto& v : t.data()) {
                double z;
                do {
                    z = rng.normal();
                } while (std::abs(z) > 2.0);
                v = static_cast<float>(sigma * z);
            }
        }
        params.emplace(name, std::move(t));
    }
    return params;
}

std::string to_string(FreezeVariant v) {
    switch (v) {
        case FreezeVariant::nn1_head_only: return "NN1";
        case FreezeVariant::nn2_last_layer: return "NN2";
        case FreezeVariant::nn3_last_two_layers: return "NN3";
    }
    return "NN3";
}

FreezeVariant freeze_from_string(const std::string& s) {
    std::string u;
    for (char c : s) u.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    if (u == "NN1") return FreezeVariant::nn1_head_only;
    if (u == "NN2") return FreezeVariant::nn2_last_layer;
    if (u == "NN3") return FreezeVariant::nn3_last_two_layers;
    throw UsageError("unknown freeze configuration '" + s + "' (expected nn1, nn2 or nn3)");
}

std::size_t FreezeConfig::unfrozen_layers() const noexcept {
    switch (variant) {
        case FreezeVariant::nn1_head_only: return 0;
        case FreezeVariant::nn2_last_layer: return 1;
        case FreezeVariant::nn3_last_two_layers: return 2;
    }
    return 0;
}

std::size_t FreezeConfig::first_unfrozen_layer(const ModelConfig& cfg) const noexcept {
    const std::size_t k = std::min(unfrozen_layers(), cfg.layers);
    return cfg.layers + 1 - k;
}

std::vector<std::string> trainable_params(const ModelConfig& cfg, const FreezeConfig& freeze) {
    const std::size_t first = freeze.first_unfrozen_layer(cfg);
    std::vector<std::string> out;
    for (const auto& name : parameter_names(cfg)) {
        if (name.rfind("pooler.", 0) == 0 || name.rfind("classifier.", 0) == 0) {
            out.push_back(name);
            continue;
        }
        for (std::size_t l = first; l <= cfg.layers; ++l)
            if (name.rfind(layer_prefix(l), 0) == 0) out.push_back(name);
    }
    return out;
}

std::set<std::string> trainable_set(const ModelConfig& cfg, const FreezeConfig& freeze) {
    auto names = trainable_params(cfg, freeze);
    return {names.begin(), names.end()};
}

}  // namespace kt::enc
