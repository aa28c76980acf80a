#include "kt/corpus.hpp"

#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "kt/error.hpp"

namespace kt::corpus {

namespace {

bool blank(const std::string& s) {
    return s.find_first_not_of(" \t\r\n\f\v") == std::string::npos;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

[[noreturn]] void row_error(const std::filesystem::path& path, std::size_t line, const std::string& what) {
    throw DataError(path.string() + ":" + std::to_string(line) + ": " + what);
}

int parse_label(const std::string& raw, const std::filesystem::path& path, std::size_t line) {
    if (raw == "0") return 0;
    if (raw == "1") return 1;
    row_error(path, line, "label must be 0 or 1, got '" + raw + "'");
}

std::vector<TriageRecord> parse_jsonl(const std::string& content, const std::filesystem::path& path,
                                      bool require_labels, Source source) {
    std::vector<TriageRecord> out;
    std::istringstream in(content);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (blank(line)) continue;
        nlohmann::json row;
        try {
            row = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            row_error(path, lineno, std::string("malformed JSON: ") + e.what());
        }
        if (!row.is_object()) row_error(path, lineno, "expected a JSON object");
        if (!row.contains("id") || !row.contains("text")) row_error(path, lineno, "missing id or text");
        TriageRecord rec;
        rec.source = source;
        if (row["id"].is_string()) {
            rec.id = row["id"].get<std::string>();
        } else if (row["id"].is_number_integer()) {
            rec.id = std::to_string(row["id"].get<long long>());
        } else {
            row_error(path, lineno, "id must be a string");
        }
        if (!row["text"].is_string()) row_error(path, lineno, "text must be a string");
        rec.text = row["text"].get<std::string>();
        if (row.contains("label") && !row["label"].is_null()) {
            const auto& l = row["label"];
            if (!l.is_number_integer()) row_error(path, lineno, "label must be 0 or 1, got " + l.dump());
            rec.label = parse_label(std::to_string(l.get<long long>()), path, lineno);
        } else if (require_labels) {
            row_error(path, lineno, "missing label");
        }
        if (rec.id.empty()) row_error(path, lineno, "empty id");
        if (blank(rec.text)) row_error(path, lineno, "empty text");
        out.push_back(std::move(rec));
    }
    return out;
}

struct CsvRow {
    std::vector<std::string> fields;
    std::size_t line = 0;
};

// RFC-4180: quoted fields may contain commas, doubled quotes and line breaks.
std::vector<CsvRow> parse_csv_rows(const std::string& s, const std::filesystem::path& path) {
    std::vector<CsvRow> rows;
    CsvRow row;
    std::string field;
    std::size_t line = 1;
    row.line = 1;
    bool quoted = false;
    bool field_started = false;
    std::size_t i = 0;
    auto end_field = [&] {
        row.fields.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_row = [&] {
        end_field();
        if (!(row.fields.size() == 1 && row.fields[0].empty())) rows.push_back(std::move(row));
        row = CsvRow{};
        row.line = line;
    };
    while (i < s.size()) {
        const char c = s[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < s.size() && s[i + 1] == '"') {
                    field.push_back('"');
                    i += 2;
                    continue;
                }
                quoted = false;
                ++i;
                if (i < s.size() && s[i] != ',' && s[i] != '\n' && s[i] != '\r')
                    row_error(path, line, "unexpected character after closing quote");
                continue;
            }
            if (c == '\n') ++line;
            field.push_back(c);
            ++i;
            continue;
        }
        if (c == '"') {
            if (field_started || !field.empty()) row_error(path, line, "quote inside unquoted field");
            quoted = true;
            field_started = true;
            ++i;
        } else if (c == ',') {
            end_field();
            ++i;
        } else if (c == '\r' || c == '\n') {
            if (c == '\r' && i + 1 < s.size() && s[i + 1] == '\n') ++i;
            ++i;
            ++line;
            end_row();
        } else {
            field.push_back(c);
            field_started = true;
            ++i;
        }
    }
    if (quoted) row_error(path, row.line, "unterminated quoted field");
    if (field_started || !field.empty() || !row.fields.empty()) end_row();
    return rows;
}

std::vector<TriageRecord> parse_csv(const std::string& content, const std::filesystem::path& path,
                                    bool require_labels, Source source) {
    auto rows = parse_csv_rows(content, path);
    if (rows.empty()) return {};
    const auto& header = rows.front().fields;
    int id_col = -1, text_col = -1, label_col = -1;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == "id") id_col = static_cast<int>(c);
        if (header[c] == "text") text_col = static_cast<int>(c);
        if (header[c] == "label") label_col = static_cast<int>(c);
    }
    if (id_col < 0 || text_col < 0) row_error(path, rows.front().line, "header must contain id,text");
    if (require_labels && label_col < 0) row_error(path, rows.front().line, "header lacks a label column");

    std::vector<TriageRecord> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.fields.size() != header.size())
            row_error(path, row.line,
                      "expected " + std::to_string(header.size()) + " fields, got " + std::to_string(row.fields.size()));
        TriageRecord rec;
        rec.source = source;
        rec.id = row.fields[static_cast<std::size_t>(id_col)];
        rec.text = row.fields[static_cast<std::size_t>(text_col)];
        if (label_col >= 0 && !row.fields[static_cast<std::size_t>(label_col)].empty()) {
            rec.label = parse_label(row.fields[static_cast<std::size_t>(label_col)], path, row.line);
        } else if (require_labels) {
            row_error(path, row.line, "missing label");
        }
        if (rec.id.empty()) row_error(path, row.line, "empty id");
        if (blank(rec.text)) row_error(path, row.line, "empty text");
        out.push_back(std::move(rec));
    }
    return out;
}

std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

}  // namespace

std::string to_string(Source s) {
    switch (s) {
        case Source::mimic_like: return "mimic_like";
        case Source::hospital: return "hospital";
        case Source::synthetic: return "synthetic";
    }
    return "synthetic";
}

Source source_from_string(const std::string& s) {
    if (s == "mimic_like") return Source::mimic_like;
    if (s == "hospital") return Source::hospital;
    if (s == "synthetic") return Source::synthetic;
    throw DataError("unknown source '" + s + "'");
}

LabelledDataset::LabelledDataset(std::vector<TriageRecord> records) : records_(std::move(records)) {
    std::unordered_set<std::string> seen;
    seen.reserve(records_.size());
    for (const auto& r : records_) {
        if (r.id.empty()) throw DataError("record with empty id");
        if (blank(r.text)) throw DataError("record '" + r.id + "' has empty text");
        if (!r.label) throw DataError("record '" + r.id + "' is unlabelled");
        if (*r.label != 0 && *r.label != 1) throw DataError("record '" + r.id + "' has a label outside {0,1}");
        if (!seen.insert(r.id).second) throw DataError("duplicate id '" + r.id + "'");
        (*r.label == 1 ? positives_ : negatives_) += 1;
    }
}

std::vector<int> LabelledDataset::labels() const {
    std::vector<int> out;
    out.reserve(records_.size());
    for (const auto& r : records_) out.push_back(*r.label);
    return out;
}

std::vector<std::string> LabelledDataset::texts() const {
    std::vector<std::string> out;
    out.reserve(records_.size());
    for (const auto& r : records_) out.push_back(r.text);
    return out;
}

Format format_from_path(const std::filesystem::path& path) {
    const auto ext = path.extension().string();
    if (ext == ".csv") return Format::csv;
    if (ext == ".jsonl" || ext == ".json" || ext == ".ndjson") return Format::jsonl;
    throw DataError("cannot infer format of " + path.string() + " (expected .jsonl or .csv)");
}

std::vector<TriageRecord> load_records(const std::filesystem::path& path, Format format, bool require_labels,
                                       Source source) {
    const std::string content = read_file(path);
    auto records = format == Format::jsonl ? parse_jsonl(content, path, require_labels, source)
                                           : parse_csv(content, path, require_labels, source);
    if (records.empty()) throw DataError(path.string() + ": no records");
    std::unordered_set<std::string> seen;
    for (const auto& r : records)
        if (!seen.insert(r.id).second) throw DataError(path.string() + ": duplicate id '" + r.id + "'");
    return records;
}

LabelledDataset load_dataset(const std::filesystem::path& path, Format format, Source source) {
    return LabelledDataset(load_records(path, format, true, source));
}

void save_records(const std::vector<TriageRecord>& records, const std::filesystem::path& path, Format format) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    if (format == Format::jsonl) {
        for (const auto& r : records) {
            nlohmann::ordered_json row;
            row["id"] = r.id;
            row["text"] = r.text;
            if (r.label) row["label"] = *r.label;
            out << row.dump() << '\n';
        }
    } else {
        out << "id,text,label\r\n";
        for (const auto& r : records) {
            out << csv_quote(r.id) << ',' << csv_quote(r.text) << ',';
            if (r.label) out << *r.label;
            out << "\r\n";
        }
    }
    if (!out) throw DataError("write failed for " + path.string());
}

void save_dataset(const LabelledDataset& data, const std::filesystem::path& path, Format format) {
    save_records(data.records(), path, format);
}

}  // namespace kt::corpus
