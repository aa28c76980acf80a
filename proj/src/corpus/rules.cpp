#include "kt/corpus.hpp"

#include <cctype>
#include <fstream>

#include <json.hpp>

#include "kt/error.hpp"

namespace kt::corpus {

namespace {

std::vector<std::regex> compile_all(const std::vector<std::string>& patterns, const char* which) {
    std::vector<std::regex> out;
    out.reserve(patterns.size());
    for (const auto& p : patterns) {
        try {
            out.emplace_back(p, std::regex::ECMAScript | std::regex::icase | std::regex::optimize);
        } catch (const std::regex_error& e) {
            throw DataError(std::string("invalid ") + which + " pattern '" + p + "': " + e.what());
        }
    }
    return out;
}

std::vector<std::string> string_array(const nlohmann::json& j, const char* key) {
    if (!j.contains(key)) return {};
    if (!j[key].is_array()) throw DataError(std::string("rule file: '") + key + "' must be an array");
    std::vector<std::string> out;
    for (const auto& v : j[key]) {
        if (!v.is_string()) throw DataError(std::string("rule file: '") + key + "' entries must be strings");
        out.push_back(v.get<std::string>());
    }
    return out;
}

}  // namespace

std::string normalize_for_rules(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

LabelRuleSet load_rules(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open rule file " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError("rule file " + path.string() + ": " + e.what());
    }
    LabelRuleSet rules;
    rules.include_patterns = string_array(j, "include");
    rules.exclude_patterns = string_array(j, "exclude");
    if (j.contains("default_label")) {
        if (!j["default_label"].is_number_integer()) throw DataError("rule file: default_label must be 0 or 1");
        rules.default_label = j["default_label"].get<int>();
    }
    if (rules.default_label != 0 && rules.default_label != 1)
        throw DataError("rule file: default_label must be 0 or 1");
    CompiledRules check(rules);
    return rules;
}

CompiledRules::CompiledRules(const LabelRuleSet& rules)
    : include_(compile_all(rules.include_patterns, "include")),
      exclude_(compile_all(rules.exclude_patterns, "exclude")),
      default_label_(rules.default_label) {
    if (default_label_ != 0 && default_label_ != 1) throw DataError("default_label must be 0 or 1");
}

int CompiledRules::label(const std::string& text) const {
    const std::string norm = normalize_for_rules(text);
    bool included = false;
    for (const auto& re : include_) {
        if (std::regex_search(norm, re)) {
            included = true;
            break;
        }
    }
    if (!included) return default_label_;
    for (const auto& re : exclude_)
        if (std::regex_search(norm, re)) return default_label_;
    return 1;
}

LabelledDataset apply_rules(const std::vector<TriageRecord>& records, const LabelRuleSet& rules) {
    const CompiledRules compiled(rules);
    std::vector<TriageRecord> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        TriageRecord labelled = r;
        labelled.label = compiled.label(r.text);
        out.push_back(std::move(labelled));
    }
    return LabelledDataset(std::move(out));
}

}  // namespace kt::corpus
