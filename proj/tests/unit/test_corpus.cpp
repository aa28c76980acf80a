#include <doctest.h>

#include <algorithm>
#include <set>

#include "kt/corpus.hpp"
#include "kt/error.hpp"
#include "kt/rng.hpp"
#include "kt/synthetic.hpp"
#include "support.hpp"

using namespace kt;
using namespace kt::corpus;

namespace {

TriageRecord rec(std::string id, std::string text, std::optional<int> label) {
    return {std::move(id), std::move(text), label, Source::synthetic};
}

LabelledDataset counted(std::size_t pos, std::size_t neg) {
    std::vector<TriageRecord> rs;
    for (std::size_t i = 0; i < pos; ++i) rs.push_back(rec("p" + std::to_string(i), "mva", 1));
    for (std::size_t i = 0; i < neg; ++i) rs.push_back(rec("n" + std::to_string(i), "chest pain", 0));
    return LabelledDataset(rs);
}

std::set<std::string> ids(const LabelledDataset& d) {
    std::set<std::string> s;
    for (const auto& r : d.records()) s.insert(r.id);
    return s;
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("jsonl and csv files load with class counts") {
    test::TempDir dir;
    test::write_file(dir / "a.jsonl", "{\"id\":\"a\",\"text\":\"mva\",\"label\":1}\n{\"id\":\"b\",\"text\":\"chest pain\",\"label\":0}\n");
    test::write_file(dir / "a.csv", "id,text,label\na,mva,1\nb,\"chest pain, radiating\",0\n");
    for (const auto& name : {"a.jsonl", "a.csv"}) {
        const auto path = dir / name;
        const auto d = load_dataset(path, format_from_path(path));
        CHECK(d.size() == 2);
        CHECK(d.positives() == 1);
        CHECK(d.negatives() == 1);
        CHECK(d[0].id == "a");
    }
    CHECK(load_dataset(dir / "a.csv", Format::csv)[1].text == "chest pain, radiating");
}

TEST_CASE("empty file has no records") {
    test::TempDir dir;
    test::write_file(dir / "e.jsonl", "");
    CHECK_THROWS_WITH_AS(load_dataset(dir / "e.jsonl", Format::jsonl), doctest::Contains("no records"), DataError);
}

TEST_CASE("malformed rows are rejected") {
    test::TempDir dir;
    test::write_file(dir / "dup.jsonl", "{\"id\":\"a\",\"text\":\"x\",\"label\":1}\n{\"id\":\"a\",\"text\":\"y\",\"label\":0}\n");
    CHECK_THROWS_AS(load_dataset(dir / "dup.jsonl", Format::jsonl), DataError);
    test::write_file(dir / "bad.jsonl", "{\"id\":\"a\",\"text\":\"x\",\"label\":2}\n");
    CHECK_THROWS_AS(load_dataset(dir / "bad.jsonl", Format::jsonl), DataError);
    test::write_file(dir / "unl.jsonl", "{\"id\":\"a\",\"text\":\"x\"}\n");
    CHECK_THROWS_AS(load_dataset(dir / "unl.jsonl", Format::jsonl), DataError);
    CHECK(load_records(dir / "unl.jsonl", Format::jsonl, false).front().label == std::nullopt);
    test::write_file(dir / "ragged.csv", "id,text,label\na,x\n");
    CHECK_THROWS_AS(load_dataset(dir / "ragged.csv", Format::csv), DataError);
    test::write_file(dir / "json.jsonl", "{not json\n");
    CHECK_THROWS_AS(load_dataset(dir / "json.jsonl", Format::jsonl), DataError);
    CHECK_THROWS_AS(format_from_path("notes.txt"), DataError);
}

TEST_CASE("save then load reproduces records exactly") {
    test::TempDir dir;
    std::vector<TriageRecord> rs{rec("q\"1", "line one\nline two, \"quoted\"", 1), rec("r,2", "  spaced  ", 0),
                                 rec("s3", "unicode caf\xc3\xa9", 1)};
    const LabelledDataset d(rs);
    for (const auto& name : {"d.jsonl", "d.csv"}) {
        const auto path = dir / name;
        save_dataset(d, path, format_from_path(path));
        const auto back = load_dataset(path, format_from_path(path));
        REQUIRE(back.size() == d.size());
        CHECK(back.positives() == d.positives());
        for (std::size_t i = 0; i < d.size(); ++i) {
            CHECK(back[i].id == d[i].id);
            CHECK(back[i].text == d[i].text);
            CHECK(back[i].label == d[i].label);
        }
    }
}

TEST_CASE("round trip holds for generated datasets") {
    test::TempDir dir;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto d = test::toy_data(40, seed);
        for (const auto& name : {"g.jsonl", "g.csv"}) {
            const auto path = dir / name;
            save_dataset(d, path, format_from_path(path));
            const auto back = load_dataset(path, format_from_path(path));
            CHECK(back.texts() == d.texts());
            CHECK(back.labels() == d.labels());
        }
    }
}

TEST_CASE("rules: include marks positive, exclude overrides") {
    LabelRuleSet rules{{"mva"}, {}, 0};
    CHECK(CompiledRules(rules).label("MVA driver hit tree") == 1);
    rules = {{"driving"}, {"seizure"}, 0};
    CHECK(CompiledRules(rules).label("seizure while driving") == 0);
    CHECK(CompiledRules(rules).label("driving   into a pole") == 1);
    rules = {{}, {}, 0};
    const auto out = apply_rules({rec("a", "mva", std::nullopt), rec("b", "fall from ladder", std::nullopt)}, rules);
    CHECK(out.positives() == 0);
    CHECK(out.negatives() == 2);
}

TEST_CASE("rules: idempotent and independent of record order") {
    const LabelRuleSet rules{{"mva", "motor ?bike"}, {"seizure"}, 0};
    std::vector<TriageRecord> rs;
    const auto d = test::toy_data(30, 9);
    for (const auto& r : d.records()) rs.push_back(rec(r.id, r.text, std::nullopt));
    const auto once = apply_rules(rs, rules);
    const auto twice = apply_rules(once.records(), rules);
    CHECK(once.labels() == twice.labels());
    auto reversed = rs;
    std::reverse(reversed.begin(), reversed.end());
    auto back = apply_rules(reversed, rules).labels();
    std::reverse(back.begin(), back.end());
    CHECK(back == once.labels());
}

TEST_CASE("rule files load and reject bad patterns") {
    test::TempDir dir;
    test::write_file(dir / "r.json", R"({"include": ["mva", "fall"], "exclude": ["seizure"], "default_label": 0})");
    const auto r = load_rules(dir / "r.json");
    CHECK(r.include_patterns.size() == 2);
    CHECK(r.exclude_patterns.size() == 1);
    test::write_file(dir / "bad.json", R"({"include": ["(unclosed"]})");
    CHECK_THROWS_AS(load_rules(dir / "bad.json"), DataError);
    test::write_file(dir / "lab.json", R"({"default_label": 4})");
    CHECK_THROWS_AS(load_rules(dir / "lab.json"), DataError);
}

TEST_CASE("split sizes follow floor arithmetic") {
    const auto d = counted(450, 550);
    const auto s = split(d, {0.8, 1, true});
    CHECK(s.train.size() == 800);
    CHECK(s.validation.size() == 200);
    const auto small = split(counted(2, 3), {0.8, 1, false});
    CHECK(small.train.size() == 4);
    CHECK(small.validation.size() == 1);
}

TEST_CASE("split is deterministic per seed") {
    const auto d = test::toy_data(100, 4);
    const auto a = split(d, {0.8, 17, true});
    const auto b = split(d, {0.8, 17, true});
    CHECK(ids(a.train) == ids(b.train));
    const auto c = split(d, {0.8, 18, true});
    CHECK(ids(a.train) != ids(c.train));
}

TEST_CASE("split partitions and preserves class proportions") {
    SplitMix64 rng(99);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t pos = 1 + rng.below(60), neg = 1 + rng.below(60);
        const double frac = 0.1 + 0.8 * rng.uniform();
        const bool stratified = trial % 4 != 0;
        const auto d = counted(pos, neg);
        const auto s = split(d, {frac, rng.next(), stratified});
        const auto tr = ids(s.train), va = ids(s.validation);
        std::set<std::string> both;
        std::set_intersection(tr.begin(), tr.end(), va.begin(), va.end(), std::inserter(both, both.end()));
        CHECK(both.empty());
        CHECK(tr.size() + va.size() == d.size());
        CHECK(s.train.size() >= 1);
        CHECK(s.validation.size() >= 1);
        if (stratified) {
            const double expect_pos = static_cast<double>(pos) * static_cast<double>(s.train.size()) / static_cast<double>(d.size());
            CHECK(std::abs(static_cast<double>(s.train.positives()) - expect_pos) <= 1.0);
        }
    }
}

TEST_CASE("synthetic corpus is deterministic and covered by its vocabulary") {
    const auto a = test::toy_data(200, 5);
    const auto b = test::toy_data(200, 5);
    CHECK(a.texts() == b.texts());
    CHECK(a.labels() == b.labels());
    CHECK(a.positives() == 100);
    const auto vocab = test::synthetic_vocab();
    for (auto domain : {SyntheticDomain::narrative, SyntheticDomain::hospital}) {
        const auto d = test::toy_data(300, 6, domain);
        for (const auto& t : d.texts()) {
            const auto seq = tok::tokenize(t, vocab, {128, true, 100});
            CHECK(std::count(seq.ids.begin(), seq.ids.end(), vocab.unk_id()) == 0);
        }
    }
}

}  // TEST_SUITE
