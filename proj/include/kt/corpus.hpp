#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <regex>
#include <string>
#include <utility>
#include <vector>

namespace kt::corpus {

enum class Source { mimic_like, hospital, synthetic };

std::string to_string(Source s);
Source source_from_string(const std::string& s);

// One free-text note. Label 1 is the kinetic-injury (positive) class.
struct TriageRecord {
    std::string id;
    std::string text;
    std::optional<int> label;
    Source source = Source::synthetic;
};

// A fully labelled, ordered set of records with class counts kept in sync.
class LabelledDataset {
public:
    LabelledDataset() = default;
    // Throws DataError if any record is unlabelled, has a bad label,
    // an empty id/text, or a duplicate id.
    explicit LabelledDataset(std::vector<TriageRecord> records);

    const std::vector<TriageRecord>& records() const noexcept { return records_; }
    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }
    std::size_t positives() const noexcept { return positives_; }
    std::size_t negatives() const noexcept { return negatives_; }
    const TriageRecord& operator[](std::size_t i) const { return records_[i]; }

    std::vector<int> labels() const;
    std::vector<std::string> texts() const;

private:
    std::vector<TriageRecord> records_;
    std::size_t positives_ = 0;
    std::size_t negatives_ = 0;
};

enum class Format { jsonl, csv };

Format format_from_path(const std::filesystem::path& path);

// Reads records in file order. With `require_labels` every row must carry a
// label in {0,1}; otherwise unlabelled rows are kept with an empty label.
std::vector<TriageRecord> load_records(const std::filesystem::path& path, Format format,
                                       bool require_labels, Source source = Source::synthetic);

LabelledDataset load_dataset(const std::filesystem::path& path, Format format,
                             Source source = Source::synthetic);

void save_records(const std::vector<TriageRecord>& records, const std::filesystem::path& path,
                  Format format);
void save_dataset(const LabelledDataset& data, const std::filesystem::path& path, Format format);

// Case-insensitive include/exclude patterns over normalized text.
struct LabelRuleSet {
    std::vector<std::string> include_patterns;
    std::vector<std::string> exclude_patterns;
    int default_label = 0;
};

LabelRuleSet load_rules(const std::filesystem::path& path);

// Rules with their patterns compiled once. Construction fails on an invalid
// pattern, never during labelling.
class CompiledRules {
public:
    explicit CompiledRules(const LabelRuleSet& rules);

    int label(const std::string& text) const;

private:
    std::vector<std::regex> include_;
    std::vector<std::regex> exclude_;
    int default_label_ = 0;
};

// Lowercase and collapse whitespace runs to a single space; trims both ends.
std::string normalize_for_rules(const std::string& text);

LabelledDataset apply_rules(const std::vector<TriageRecord>& records, const LabelRuleSet& rules);

struct SplitSpec {
    double train_fraction = 0.8;
    std::uint64_t seed = 0;
    bool stratified = true;
};

struct Split {
    LabelledDataset train;
    LabelledDataset validation;
};

// Seeded, deterministic partition. The training size is
// floor(train_fraction * N); stratified splits apportion it across classes by
// largest remainder so each class keeps its proportion within one record.
Split split(const LabelledDataset& data, const SplitSpec& spec);

}  // namespace kt::corpus
