#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace kt::tok {

using TokenId = std::int32_t;

// Immutable token list; id is the position in the list.
class Vocab {
public:
    // Throws DataError if a special token is missing or a token repeats.
    explicit Vocab(std::vector<std::string> tokens);

    static Vocab load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    std::size_t size() const noexcept { return tokens_.size(); }
    const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
    // Returns -1 when absent.
    TokenId find(std::string_view token) const;

    TokenId pad_id() const noexcept { return pad_; }
    TokenId unk_id() const noexcept { return unk_; }
    TokenId cls_id() const noexcept { return cls_; }
    TokenId sep_id() const noexcept { return sep_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
    TokenId pad_ = 0, unk_ = 0, cls_ = 0, sep_ = 0;
};

struct TokenSequence {
    std::vector<TokenId> ids;
    std::vector<std::uint8_t> mask;

    std::size_t length() const noexcept { return ids.size(); }
    std::size_t real_tokens() const noexcept;
};

struct TokenizerOptions {
    std::size_t max_len = 128;
    bool lowercase = true;
    std::size_t max_chars_per_word = 100;
};

// Splits on whitespace and ASCII punctuation; punctuation becomes its own word.
std::vector<std::string> basic_split(std::string_view text, bool lowercase);

// Greedy longest-match WordPiece for one word. Returns {[UNK] id} when any
// position of the word cannot be matched.
std::vector<TokenId> wordpiece(std::string_view word, const Vocab& vocab, std::size_t max_chars_per_word = 100);

// [CLS] pieces... [SEP] then [PAD] up to max_len. Tail pieces are dropped
// when the note is too long; [CLS] and [SEP] always survive.
TokenSequence tokenize(std::string_view text, const Vocab& vocab, const TokenizerOptions& opts = {});

std::vector<TokenSequence> tokenize_all(const std::vector<std::string>& texts, const Vocab& vocab,
                                        const TokenizerOptions& opts = {});

// Drops trailing columns that are padding in every sequence, so a set shares
// the shortest common length. Masked columns carry no attention weight, so
// logits are unchanged.
void trim_padding(std::vector<TokenSequence>& seqs);

}  // namespace kt::tok
