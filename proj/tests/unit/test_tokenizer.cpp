#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "kt/error.hpp"
#include "kt/rng.hpp"
#include "kt/tokenizer.hpp"
#include "support.hpp"

using namespace kt;
using namespace kt::tok;

namespace {

Vocab small_vocab() { return Vocab({"[PAD]", "[UNK]", "[CLS]", "[SEP]", "mva", "##bike", "motor", "fall"}); }

}  // namespace

TEST_SUITE("tokenizer") {

TEST_CASE("greedy longest match with continuation pieces") {
    const auto v = small_vocab();
    const auto s = tokenize("motorbike mva", v, {8, true, 100});
    CHECK(s.ids == std::vector<TokenId>{2, 6, 5, 4, 3, 0, 0, 0});
    CHECK(s.mask == std::vector<std::uint8_t>{1, 1, 1, 1, 1, 0, 0, 0});
}

TEST_CASE("empty text is [CLS] [SEP] and padding") {
    const auto s = tokenize("", small_vocab(), {6, true, 100});
    CHECK(s.ids == std::vector<TokenId>{2, 3, 0, 0, 0, 0});
    CHECK(s.real_tokens() == 2);
}

TEST_CASE("unmatched word becomes a single [UNK]") {
    const auto s = tokenize("zzz", small_vocab(), {5, true, 100});
    CHECK(s.ids == std::vector<TokenId>{2, 1, 3, 0, 0});
    CHECK(wordpiece("motorz", small_vocab()) == std::vector<TokenId>{1});
    CHECK(wordpiece(std::string(120, 'a'), small_vocab(), 100) == std::vector<TokenId>{1});
}

TEST_CASE("basic split isolates punctuation and lowercases") {
    CHECK(basic_split("Pt. fell, (MVA)", true) == std::vector<std::string>{"pt", ".", "fell", ",", "(", "mva", ")"});
    CHECK(basic_split("  MVA  ", false) == std::vector<std::string>{"MVA"});
    CHECK(basic_split("", true).empty());
}

TEST_CASE("case is kept when lowercasing is off") {
    const auto s = tokenize("MVA mva", small_vocab(), {6, false, 100});
    CHECK(s.ids[1] == 1);
    CHECK(s.ids[2] == 4);
}

TEST_CASE("tail truncation keeps [CLS] and [SEP]") {
    const auto s = tokenize("mva fall mva fall mva", small_vocab(), {4, true, 100});
    CHECK(s.ids == std::vector<TokenId>{2, 4, 7, 3});
    CHECK(s.real_tokens() == 4);
}

TEST_CASE("length, mask and determinism on generated text") {
    const auto vocab = test::synthetic_vocab();
    const auto d = test::toy_data(50, 12);
    for (std::size_t max_len : {2u, 8u, 24u, 64u}) {
        for (const auto& t : d.texts()) {
            const auto a = tokenize(t, vocab, {max_len, true, 100});
            const auto b = tokenize(t, vocab, {max_len, true, 100});
            CHECK(a.ids == b.ids);
            REQUIRE(a.length() == max_len);
            REQUIRE(a.mask.size() == max_len);
            std::size_t non_pad = 0;
            for (auto id : a.ids) non_pad += id != vocab.pad_id();
            CHECK(std::accumulate(a.mask.begin(), a.mask.end(), std::size_t{0}) == non_pad);
            CHECK(a.ids.front() == vocab.cls_id());
        }
    }
}

TEST_CASE("matched pieces reassemble each word") {
    const auto vocab = test::synthetic_vocab();
    for (const auto& t : test::toy_data(40, 13).texts()) {
        for (const auto& word : basic_split(t, true)) {
            const auto pieces = wordpiece(word, vocab);
            if (pieces.size() == 1 && pieces[0] == vocab.unk_id()) continue;
            std::string joined;
            for (auto id : pieces) {
                const auto& p = vocab.token(id);
                joined += p.rfind("##", 0) == 0 ? p.substr(2) : p;
            }
            CHECK(joined == word);
        }
    }
}

TEST_CASE("vocab file is one token per line") {
    test::TempDir dir;
    const auto v = small_vocab();
    v.save(dir / "vocab.txt");
    CHECK(test::read_file(dir / "vocab.txt") == "[PAD]\n[UNK]\n[CLS]\n[SEP]\nmva\n##bike\nmotor\nfall\n");
    const auto back = Vocab::load(dir / "vocab.txt");
    CHECK(back.size() == v.size());
    CHECK(back.find("##bike") == 5);
    CHECK(back.find("absent") == -1);
    test::write_file(dir / "crlf.txt", "[PAD]\r\n[UNK]\r\n[CLS]\r\n[SEP]\r\nmva\r\n");
    CHECK(Vocab::load(dir / "crlf.txt").find("mva") == 4);
}

TEST_CASE("vocab rejects missing specials and duplicates") {
    CHECK_THROWS_AS(Vocab({"[PAD]", "[UNK]", "[CLS]"}), DataError);
    CHECK_THROWS_AS(Vocab({"[PAD]", "[UNK]", "[CLS]", "[SEP]", "a", "a"}), DataError);
    CHECK_THROWS_AS(Vocab::load("/nonexistent/vocab.txt"), DataError);
}

TEST_CASE("trim_padding drops only columns padded in every sequence") {
    const auto v = small_vocab();
    std::vector<TokenSequence> seqs{tokenize("mva", v, {10, true, 100}), tokenize("motorbike fall", v, {10, true, 100})};
    trim_padding(seqs);
    CHECK(seqs[0].length() == 5);
    CHECK(seqs[1].length() == 5);
    CHECK(seqs[0].ids == std::vector<TokenId>{2, 4, 3, 0, 0});
    CHECK(seqs[1].ids == std::vector<TokenId>{2, 6, 5, 7, 3});
    std::vector<TokenSequence> none;
    trim_padding(none);
    CHECK(none.empty());
}

}  // TEST_SUITE
