#include <doctest.h>

#include <cstdlib>
#include <filesystem>

#include <json.hpp>

#include "kt/archive.hpp"
#include "kt/grid.hpp"
#include "support.hpp"

using namespace kt;
using test::run_cli;

namespace {

// Synthetic corpus, vocabulary and a tiny base archive in `dir`.
void seed_workspace(const test::TempDir& dir) {
    REQUIRE(run_cli({"synth", "--out", dir / "train.jsonl", "--vocab", dir / "vocab.txt", "--records", "60", "--seed", "2"})
                .code == cli::kOk);
    REQUIRE(run_cli({"init", "--vocab", dir / "vocab.txt", "--out", dir / "base.nta", "--hidden", "8", "--heads", "2",
                     "--ffn", "16", "--max-len", "32"})
                .code == cli::kOk);
}

nlohmann::json logged_config(const std::string& err) {
    const auto at = err.find("config ");
    REQUIRE(at != std::string::npos);
    return nlohmann::json::parse(err.substr(at + 7, err.find('\n', at) - at - 7));
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit 1") {
    CHECK(run_cli({}).code == cli::kUsage);
    CHECK(run_cli({"frobnicate"}).code == cli::kUsage);
    const auto r = run_cli({"predict", "--bogus", "1"});
    CHECK(r.code == cli::kUsage);
    CHECK(r.err.find("Usage") != std::string::npos);
    CHECK(run_cli({"predict"}).code == cli::kUsage);
    CHECK(run_cli({"--help"}).code == cli::kOk);
}

TEST_CASE("data errors exit 2") {
    test::TempDir dir;
    CHECK(run_cli({"predict", "--model", dir / "none.nta", "--vocab", dir / "v.txt", "--data", dir / "d.jsonl"}).code ==
          cli::kData);
    test::write_file(dir / "bad.nta", "garbage");
    test::write_file(dir / "d.jsonl", "{\"id\":\"a\",\"text\":\"x\"}\n");
    tok::Vocab(corpus::synthetic_vocab()).save(dir / "v.txt");
    const auto r = run_cli({"predict", "--model", dir / "bad.nta", "--vocab", dir / "v.txt", "--data", dir / "d.jsonl"});
    CHECK(r.code == cli::kData);
    CHECK(r.err.find("bad magic") != std::string::npos);
}

TEST_CASE("non-finite training exits 3") {
    test::TempDir dir;
    seed_workspace(dir);
    auto archive = enc::load_archive(dir / "base.nta");
    archive.params.at("classifier.weight")[0] = INFINITY;
    enc::save_archive(archive.params, archive.config, dir / "inf.nta");
    const auto r = run_cli({"finetune", "--data", dir / "train.jsonl", "--init", dir / "inf.nta", "--vocab",
                            dir / "vocab.txt", "--out", dir / "ft.nta", "--max-epochs", "2", "--patience", "1"});
    CHECK(r.code == cli::kNumeric);
}

TEST_CASE("lists are only for grid") {
    test::TempDir dir;
    seed_workspace(dir);
    const auto r = run_cli({"finetune", "--data", dir / "train.jsonl", "--init", dir / "base.nta", "--vocab",
                            dir / "vocab.txt", "--out", dir / "ft.nta", "--lr", "0.001,0.01"});
    CHECK(r.code == cli::kUsage);
}

TEST_CASE("finetune, predict and adapt through the command line") {
    test::TempDir dir;
    seed_workspace(dir);
    auto ft = run_cli({"finetune", "--data", dir / "train.jsonl", "--init", dir / "base.nta", "--vocab", dir / "vocab.txt",
                       "--out", dir / "ft.nta", "--max-epochs", "2", "--patience", "1", "--lr", "0.001", "--history",
                       dir / "h.csv"});
    REQUIRE(ft.code == cli::kOk);
    CHECK(ft.out.find("NN3 Adam") != std::string::npos);
    CHECK(test::read_file(dir / "h.csv").rfind("epoch,train_loss,val_loss,improved\n0,,", 0) == 0);

    const auto pr = run_cli({"predict", "--model", dir / "ft.nta", "--vocab", dir / "vocab.txt", "--data",
                             dir / "train.jsonl", "--out", dir / "p.csv"});
    REQUIRE(pr.code == cli::kOk);
    CHECK(pr.out.find("notes/sec") != std::string::npos);
    CHECK(pr.out.find("accuracy") != std::string::npos);
    const auto csv = test::read_file(dir / "p.csv");
    CHECK(csv.rfind("id,label,score\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 61);

    REQUIRE(run_cli({"synth", "--out", dir / "hosp.jsonl", "--domain", "hospital", "--records", "40"}).code == cli::kOk);
    const auto nn1 = run_cli({"adapt", "--model", dir / "ft.nta", "--data", dir / "hosp.jsonl", "--vocab",
                              dir / "vocab.txt", "--out", dir / "ad.nta", "--freeze", "nn1"});
    CHECK(nn1.code == cli::kUsage);
    CHECK(nn1.err.find("configuration retired after stage-1 evaluation") != std::string::npos);
    const auto ad = run_cli({"adapt", "--model", dir / "ft.nta", "--data", dir / "hosp.jsonl", "--vocab",
                             dir / "vocab.txt", "--out", dir / "ad.nta", "--max-epochs", "2", "--patience", "1"});
    CHECK(ad.code == cli::kOk);
    CHECK(std::filesystem::exists(dir / "ad.nta"));
}

TEST_CASE("config files fill flags that were not given") {
    test::TempDir dir;
    seed_workspace(dir);
    test::write_file(dir / "c.json", nlohmann::json{{"data", dir / "train.jsonl"},
                                                    {"init", dir / "base.nta"},
                                                    {"vocab", dir / "vocab.txt"},
                                                    {"out", dir / "ft.nta"},
                                                    {"max-epochs", 2},
                                                    {"patience", 1},
                                                    {"lr", 0.5},
                                                    {"optimizer", "sgd"}}
                                         .dump());
    const auto r = run_cli({"finetune", "--config", dir / "c.json", "--lr", "0.01"});
    REQUIRE(r.code == cli::kOk);
    const auto cfg = logged_config(r.err);
    CHECK(cfg.at("subcommand") == "finetune");
    CHECK(cfg.at("lr") == "0.01");
    CHECK(cfg.at("optimizer") == "sgd");
    CHECK(cfg.at("max-epochs") == "2");
    CHECK(cfg.at("freeze") == "nn3");

    test::write_file(dir / "unknown.json", R"({"colour": "blue"})");
    CHECK(run_cli({"finetune", "--config", dir / "unknown.json"}).code == cli::kUsage);
    CHECK(run_cli({"finetune", "--config", dir / "absent.json"}).code == cli::kData);
}

TEST_CASE("a logged configuration reproduces the run") {
    test::TempDir dir;
    seed_workspace(dir);
    const auto first = run_cli({"finetune", "--data", dir / "train.jsonl", "--init", dir / "base.nta", "--vocab",
                                dir / "vocab.txt", "--out", dir / "a.nta", "--max-epochs", "2", "--patience", "1",
                                "--seed", "4"});
    REQUIRE(first.code == cli::kOk);
    auto cfg = logged_config(first.err);
    const std::string sub = cfg.at("subcommand");
    cfg["out"] = dir / "b.nta";
    test::write_file(dir / "replay.json", cfg.dump());
    const auto second = run_cli({sub, "--config", dir / "replay.json"});
    REQUIRE(second.code == cli::kOk);
    CHECK(enc::load_archive(dir / "a.nta").params == enc::load_archive(dir / "b.nta").params);
}

TEST_CASE("worker count: flag, then environment, then 1") {
    test::TempDir dir;
    seed_workspace(dir);
    const std::vector<std::string> base{"predict", "--model", dir / "base.nta", "--vocab", dir / "vocab.txt", "--data",
                                        dir / "train.jsonl", "--out", dir / "p.csv"};
    CHECK(logged_config(run_cli(base).err).at("workers") == "1");
    ::setenv("KT_WORKERS", "3", 1);
    CHECK(logged_config(run_cli(base).err).at("workers") == "3");
    auto flagged = base;
    flagged.insert(flagged.end(), {"--workers", "2"});
    CHECK(logged_config(run_cli(flagged).err).at("workers") == "2");
    ::setenv("KT_WORKERS", "zero", 1);
    CHECK(run_cli(base).code == cli::kUsage);
    ::unsetenv("KT_WORKERS");
}

TEST_CASE("label and split") {
    test::TempDir dir;
    test::write_file(dir / "raw.csv", "id,text\na,MVA driver hit tree\nb,seizure while driving\nc,fell off ladder\n"
                                      "d,chest pain\ne,driving home fast\n");
    test::write_file(dir / "rules.json", R"({"include": ["mva", "driving", "fell"], "exclude": ["seizure"]})");
    const auto l = run_cli({"label", "--data", dir / "raw.csv", "--rules", dir / "rules.json", "--out", dir / "l.jsonl"});
    REQUIRE(l.code == cli::kOk);
    const auto d = corpus::load_dataset(dir / "l.jsonl", corpus::Format::jsonl);
    CHECK(d.labels() == std::vector<int>{1, 0, 1, 0, 1});
    const auto s = run_cli({"split", "--data", dir / "l.jsonl", "--out", dir / "tr.csv", "--val-out", dir / "va.csv",
                            "--train-fraction", "0.6", "--seed", "3"});
    REQUIRE(s.code == cli::kOk);
    CHECK(corpus::load_dataset(dir / "tr.csv", corpus::Format::csv).size() == 3);
    CHECK(corpus::load_dataset(dir / "va.csv", corpus::Format::csv).size() == 2);
}

TEST_CASE("stats and report read a ledger") {
    test::TempDir dir;
    std::string ledger = std::string(train::kLedgerHeader) + "\n";
    const double adam[] = {0.93, 0.94, 0.935, 0.93, 0.94}, adamw[] = {0.93, 0.925, 0.935, 0.93, 0.928};
    for (std::size_t i = 0; i < 5; ++i) {
        for (auto [opt, acc] : {std::pair{"Adam", adam[i]}, std::pair{"AdamW", adamw[i]}}) {
            train::RunResult r;
            r.freeze = "NN3";
            r.optimizer = opt;
            r.lr = 1e-4;
            r.dr = 0.2;
            r.repeat = i;
            r.metrics.accuracy = acc;
            r.metrics.f1 = acc - 0.01;
            r.train_seconds = 100.0 + static_cast<double>(i);
            ledger += train::ledger_row(r) + "\n";
        }
    }
    test::write_file(dir / "runs.csv", ledger);
    const auto st =
        run_cli({"stats", "--ledger", dir / "runs.csv", "--cell-a", "Adam,0.0001,0.2", "--cell-b", "NN3,AdamW,0.0001,0.2"});
    REQUIRE(st.code == cli::kOk);
    CHECK(st.out.find("Welch t = ") != std::string::npos);
    CHECK(st.out.find("n=5") != std::string::npos);
    CHECK(run_cli({"stats", "--ledger", dir / "runs.csv", "--cell-a", "SGD,0.0001,0.2", "--cell-b", "Adam,0.0001,0.2"})
              .code == cli::kData);
    CHECK(run_cli({"stats", "--ledger", dir / "runs.csv", "--cell-a", "Adam,0.0001", "--cell-b", "Adam,0.0001,0.2"})
              .code == cli::kUsage);

    const auto rep = run_cli({"report", "--ledger", dir / "runs.csv", "--out", dir / "rep"});
    REQUIRE(rep.code == cli::kOk);
    for (auto* f : {"report.csv", "report.txt", "plot_accuracy.csv", "plot_f1.csv", "plot_seconds.csv", "results.svg"})
        CHECK(std::filesystem::exists(dir.path() / "rep" / f));
}

TEST_CASE("grid via the command line resumes from its ledger") {
    test::TempDir dir;
    seed_workspace(dir);
    const std::vector<std::string> args{"grid", "--data", dir / "train.jsonl", "--init", dir / "base.nta", "--vocab",
                                        dir / "vocab.txt", "--ledger", dir / "runs.csv", "--freeze", "nn1", "--optimizer",
                                        "adam,sgd", "--lr", "0.001", "--dropout", "0.15", "--repeats", "2",
                                        "--max-epochs", "2", "--patience", "1"};
    const auto first = run_cli(args);
    REQUIRE(first.code == cli::kOk);
    CHECK(first.out.find("4 executed") != std::string::npos);
    CHECK(train::read_ledger(dir / "runs.csv").size() == 4);
    const auto again = run_cli(args);
    CHECK(again.out.find("0 executed, 4 resumed") != std::string::npos);
}

}  // TEST_SUITE
