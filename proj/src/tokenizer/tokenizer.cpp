#include "kt/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "kt/error.hpp"

namespace kt::tok {

namespace {

bool is_space(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_punct(unsigned char c) {
    return (c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) || (c >= 123 && c <= 126);
}

bool is_control(unsigned char c) {
    return c < 32 || c == 127;
}

}  // namespace

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    index_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second)
            throw DataError("vocabulary token '" + tokens_[i] + "' appears twice (line " + std::to_string(i + 1) + ")");
    }
    auto special = [&](const char* name) {
        const TokenId id = find(name);
        if (id < 0) throw DataError(std::string("vocabulary lacks special token ") + name);
        return id;
    };
    pad_ = special("[PAD]");
    unk_ = special("[UNK]");
    cls_ = special("[CLS]");
    sep_ = special("[SEP]");
}

Vocab Vocab::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open vocabulary " + path.string());
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        tokens.push_back(line);
    }
    return Vocab(std::move(tokens));
}

void Vocab::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write vocabulary " + path.string());
    for (const auto& t : tokens_) out << t << '\n';
}

TokenId Vocab::find(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? -1 : it->second;
}

std::size_t TokenSequence::real_tokens() const noexcept {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

std::vector<std::string> basic_split(std::string_view text, bool lowercase) {
    std::vector<std::string> words;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) words.push_back(std::move(cur));
        cur.clear();
    };
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (is_space(c)) {
            flush();
        } else if (is_control(c)) {
            continue;
        } else if (is_punct(c)) {
            flush();
            words.emplace_back(1, ch);
        } else {
            // Bytes >= 0x80 (UTF-8 continuation or lead bytes) pass through.
            cur.push_back(lowercase && c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
        }
    }
    flush();
    return words;
}

std::vector<TokenId> wordpiece(std::string_view word, const Vocab& vocab, std::size_t max_chars_per_word) {
    if (word.empty()) return {};
    if (word.size() > max_chars_per_word) return {vocab.unk_id()};
    std::vector<TokenId> pieces;
    std::string candidate;
    std::size_t start = 0;
    while (start < word.size()) {
        std::size_t end = word.size();
        TokenId match = -1;
        while (end > start) {
            candidate.assign(start > 0 ? "##" : "");
            candidate.append(word.substr(start, end - start));
            match = vocab.find(candidate);
            if (match >= 0) break;
            --end;
        }
        if (match < 0) return {vocab.unk_id()};
        pieces.push_back(match);
        start = end;
    }
    return pieces;
}

TokenSequence tokenize(std::string_view text, const Vocab& vocab, const TokenizerOptions& opts) {
    if (opts.max_len < 2) throw UsageError("max_len must be at least 2");
    TokenSequence seq;
    seq.ids.reserve(opts.max_len);
    seq.ids.push_back(vocab.cls_id());
    const std::size_t budget = opts.max_len - 1;  // room left for [SEP]
    for (const auto& word : basic_split(text, opts.lowercase)) {
        if (seq.ids.size() >= budget) break;
        for (TokenId id : wordpiece(word, vocab, opts.max_chars_per_word)) {
            if (seq.ids.size() >= budget) break;
            seq.ids.push_back(id);
        }
    }
    seq.ids.push_back(vocab.sep_id());
    seq.mask.assign(seq.ids.size(), 1);
    seq.ids.resize(opts.max_len, vocab.pad_id());
    seq.mask.resize(opts.max_len, 0);
    return seq;
}

std::vector<TokenSequence> tokenize_all(const std::vector<std::string>& texts, const Vocab& vocab,
                                        const TokenizerOptions& opts) {
    std::vector<TokenSequence> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(tokenize(t, vocab, opts));
    return out;
}

void trim_padding(std::vector<TokenSequence>& seqs) {
    std::size_t keep = 0;
    for (const auto& s : seqs) {
        std::size_t last = s.mask.size();
        while (last > 0 && !s.mask[last - 1]) --last;
        keep = std::max(keep, last);
    }
    for (auto& s : seqs) {
        if (s.ids.size() > keep) s.ids.resize(keep);
        if (s.mask.size() > keep) s.mask.resize(keep);
    }
}

}  // namespace kt::tok
