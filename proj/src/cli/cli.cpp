#include "kt/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <ostream>
#include <sstream>

#include "kt/archive.hpp"
#include "kt/corpus.hpp"
#include "kt/error.hpp"
#include "kt/grid.hpp"
#include "kt/predict.hpp"
#include "kt/report.hpp"
#include "kt/stats.hpp"
#include "kt/synthetic.hpp"
#include "kt/text.hpp"
#include "kt/trainer.hpp"

namespace kt::cli {

namespace {

struct Options {
    std::string data, init, model, vocab, out, val_out, rules, ledger = "runs.csv", history, checkpoints;
    std::string freeze = "nn3", optimizer = "adam", lr = "0.0001", dropout = "0.15";
    std::string grid_freeze = "nn1,nn2,nn3", grid_optimizer = "sgd,adam,adamw", grid_lr = "0.0001,0.0005,0.005",
                grid_dropout = "0.15,0.2,0.25";
    std::string cell_a, cell_b, metric = "accuracy", domain = "narrative";
    std::size_t batch_size = 16, max_epochs = 200, patience = 10, repeats = 10, workers = 1, records = 1000;
    std::size_t layers = 2, hidden = 32, heads = 4, ffn = 64, max_len = 48;
    std::uint64_t seed = 0;
    double train_fraction = 0.8, weight_decay = 0.01, alpha = 0.05, positive_fraction = 0.45, init_sigma = 0.02;
};

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != ' ') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    for (const auto& v : out)
        if (v.empty()) throw UsageError("empty element in list '" + s + "'");
    return out;
}

double parse_real(const std::string& s, const char* what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw UsageError(std::string(what) + ": '" + s + "' is not a number");
    }
}

std::string single(const std::string& list, const char* flag) {
    const auto parts = split_list(list);
    if (parts.size() != 1) throw UsageError(std::string(flag) + " takes a single value here (lists are for grid)");
    return parts.front();
}

void require(const std::string& value, const char* flag) {
    if (value.empty()) throw UsageError(std::string(flag) + " is required");
}

corpus::Format format_of(const std::string& path) {
    try {
        return corpus::format_from_path(path);
    } catch (const DataError& e) {
        throw UsageError(e.what());
    }
}

// Values from a JSON config file become flags unless given on the command
// line.
std::vector<std::string> merge_config(const std::vector<std::string>& args) {
    std::string config;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) config = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) config = args[i].substr(9);
    }
    if (config.empty()) return args;
    std::ifstream in(config);
    if (!in) throw DataError("cannot open config " + config);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(config + ": " + e.what());
    }
    if (!j.is_object()) throw DataError(config + ": expected a JSON object");
    std::vector<std::string> merged = args;
    for (const auto& [key, value] : j.items()) {
        if (key == "subcommand" || key == "config") continue;
        const std::string flag = "--" + key;
        const bool given = std::any_of(args.begin(), args.end(), [&](const std::string& a) {
            return a == flag || a.rfind(flag + "=", 0) == 0;
        });
        if (given) continue;
        std::string text;
        if (value.is_string()) {
            text = value.get<std::string>();
        } else if (value.is_array()) {
            for (const auto& v : value) text += (text.empty() ? "" : ",") + (v.is_string() ? v.get<std::string>() : v.dump());
        } else {
            text = value.dump();
        }
        merged.push_back(flag);
        merged.push_back(text);
    }
    return merged;
}

nlohmann::ordered_json resolved_config(const CLI::App& sub) {
    nlohmann::ordered_json j;
    j["subcommand"] = sub.get_name();
    for (const auto* opt : sub.get_options()) {
        if (opt->get_lnames().empty()) continue;
        const auto& name = opt->get_lnames().front();
        if (name == "help" || name == "config") continue;
        std::string value;
        if (opt->count() > 0) {
            for (const auto& r : opt->results()) value += (value.empty() ? "" : ",") + r;
        } else {
            value = opt->get_default_str();
        }
        if (!value.empty()) j[name] = value;
    }
    return j;
}

train::TrainPlan plan_from(const Options& o) {
    train::TrainPlan plan;
    plan.freeze.variant = enc::freeze_from_string(single(o.freeze, "--freeze"));
    plan.optimizer.kind = train::optimizer_from_string(single(o.optimizer, "--optimizer"));
    plan.optimizer.lr = parse_real(single(o.lr, "--lr"), "--lr");
    plan.optimizer.weight_decay = o.weight_decay;
    plan.dropout = parse_real(single(o.dropout, "--dropout"), "--dropout");
    plan.config.max_epochs = o.max_epochs;
    plan.config.patience = o.patience;
    plan.config.batch_size = o.batch_size;
    plan.config.train_fraction = o.train_fraction;
    plan.config.seed = o.seed;
    plan.config.repeats = o.repeats;
    plan.config.validate();
    plan.optimizer.validate();
    return plan;
}

train::EpochCallback progress(std::ostream& err, std::vector<train::EpochLog>& log) {
    return [&err, &log](const train::EpochLog& e) {
        log.push_back(e);
        err << "epoch " << e.epoch << "  train_loss " << format_fixed(e.train_loss, 5) << "  val_loss "
            << format_fixed(e.val_loss, 5) << (e.improved ? "  *" : "") << '\n';
    };
}

void write_history(const std::string& path, const std::vector<train::EpochLog>& log, double initial) {
    if (path.empty()) return;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path);
    out << "epoch,train_loss,val_loss,improved\n";
    out << "0,," << format_real(initial) << ",0\n";
    for (const auto& e : log)
        out << e.epoch << ',' << format_real(e.train_loss) << ',' << format_real(e.val_loss) << ',' << (e.improved ? 1 : 0) << '\n';
}

void print_result(std::ostream& out, const train::RunResult& r, double initial_val_loss) {
    out << r.freeze << ' ' << r.optimizer << " lr=" << format_real(r.lr) << " dr=" << format_real(r.dr) << ": epochs "
        << r.epochs_run << " (best " << r.best_epoch << "), val_loss " << format_fixed(initial_val_loss, 4) << " -> "
        << format_fixed(r.best_val_loss, 4) << ", accuracy " << format_fixed(r.metrics.accuracy, 4) << ", precision "
        << format_fixed(r.metrics.precision, 4) << ", recall " << format_fixed(r.metrics.recall, 4) << ", f1 "
        << format_fixed(r.metrics.f1, 4) << ", " << format_fixed(r.train_seconds, 2) << " s\n";
}

// --- subcommands -----------------------------------------------------------

int cmd_label(const Options& o, std::ostream& out) {
    require(o.data, "--data");
    require(o.rules, "--rules");
    require(o.out, "--out");
    const auto records = corpus::load_records(o.data, format_of(o.data), false);
    const auto labelled = corpus::apply_rules(records, corpus::load_rules(o.rules));
    corpus::save_dataset(labelled, o.out, format_of(o.out));
    out << "labelled " << labelled.size() << " records: " << labelled.positives() << " positive, " << labelled.negatives()
        << " negative -> " << o.out << '\n';
    return kOk;
}

int cmd_split(const Options& o, std::ostream& out) {
    require(o.data, "--data");
    require(o.out, "--out");
    require(o.val_out, "--val-out");
    const auto data = corpus::load_dataset(o.data, format_of(o.data));
    const auto parts = corpus::split(data, {o.train_fraction, o.seed, true});
    corpus::save_dataset(parts.train, o.out, format_of(o.out));
    corpus::save_dataset(parts.validation, o.val_out, format_of(o.val_out));
    out << "train " << parts.train.size() << " (" << parts.train.positives() << " positive) -> " << o.out << '\n'
        << "validation " << parts.validation.size() << " (" << parts.validation.positives() << " positive) -> " << o.val_out
        << '\n';
    return kOk;
}

int cmd_synth(const Options& o, std::ostream& out) {
    require(o.out, "--out");
    corpus::SyntheticSpec spec;
    spec.records = o.records;
    spec.positive_fraction = o.positive_fraction;
    spec.seed = o.seed;
    if (o.domain == "narrative") spec.domain = corpus::SyntheticDomain::narrative;
    else if (o.domain == "hospital") spec.domain = corpus::SyntheticDomain::hospital;
    else throw UsageError("--domain must be narrative or hospital");
    spec.id_prefix = o.domain;
    const auto data = corpus::make_synthetic(spec);
    corpus::save_dataset(data, o.out, format_of(o.out));
    out << "wrote " << data.size() << " synthetic " << o.domain << " records (" << data.positives() << " positive) -> " << o.out
        << '\n';
    if (!o.vocab.empty()) {
        tok::Vocab(corpus::synthetic_vocab()).save(o.vocab);
        out << "wrote vocabulary -> " << o.vocab << '\n';
    }
    return kOk;
}

int cmd_init(const Options& o, std::ostream& out) {
    require(o.vocab, "--vocab");
    require(o.out, "--out");
    const auto vocab = tok::Vocab::load(o.vocab);
    enc::ModelConfig cfg;
    try {
        cfg = enc::toy_config(vocab.size(), o.layers, o.hidden, o.heads, o.ffn, o.max_len);
    } catch (const DataError& e) {
        throw UsageError(e.what());
    }
    const auto params = enc::init_params(cfg, o.seed, o.init_sigma);
    enc::save_archive(params, cfg, o.out);
    out << "initialized " << enc::parameter_count(params) << " parameters (L=" << cfg.layers << ", H=" << cfg.hidden
        << ", A=" << cfg.heads << ", F=" << cfg.ffn << ", V=" << cfg.vocab_size << ") -> " << o.out << '\n';
    return kOk;
}

int cmd_finetune(const Options& o, std::ostream& out, std::ostream& err) {
    require(o.data, "--data");
    require(o.init, "--init");
    require(o.vocab, "--vocab");
    require(o.out, "--out");
    const auto plan = plan_from(o);
    const auto data = corpus::load_dataset(o.data, format_of(o.data));
    const auto vocab = tok::Vocab::load(o.vocab);
    const auto base = enc::load_archive(o.init);
    std::vector<train::EpochLog> log;
    auto outcome = train::train(data, base.params, base.config, vocab, plan, progress(err, log));
    enc::save_archive(outcome.params, outcome.config, o.out);
    outcome.result.checkpoint = o.out;
    write_history(o.history, log, outcome.initial_val_loss);
    print_result(out, outcome.result, outcome.initial_val_loss);
    out << "model -> " << o.out << '\n';
    return kOk;
}

int cmd_adapt(const Options& o, std::ostream& out, std::ostream& err) {
    require(o.data, "--data");
    require(o.model, "--model");
    require(o.vocab, "--vocab");
    require(o.out, "--out");
    const auto plan = plan_from(o);
    const auto data = corpus::load_dataset(o.data, format_of(o.data));
    const auto vocab = tok::Vocab::load(o.vocab);
    std::vector<train::EpochLog> log;
    auto outcome = train::adapt(o.model, data, vocab, plan, std::filesystem::path(o.out), progress(err, log));
    write_history(o.history, log, outcome.initial_val_loss);
    print_result(out, outcome.result, outcome.initial_val_loss);
    out << "adapted model -> " << o.out << '\n';
    return kOk;
}

int cmd_predict(const Options& o, std::ostream& out) {
    require(o.model, "--model");
    require(o.vocab, "--vocab");
    require(o.data, "--data");
    const auto records = corpus::load_records(o.data, format_of(o.data), false);
    const auto model = enc::load_archive(o.model);
    const auto vocab = tok::Vocab::load(o.vocab);
    if (vocab.size() != model.config.vocab_size)
        throw DataError("vocabulary has " + std::to_string(vocab.size()) + " tokens but the model expects " +
                        std::to_string(model.config.vocab_size));
    std::vector<std::string> texts;
    for (const auto& r : records) texts.push_back(r.text);

    const auto pred = eval::predict(model.params, model.config, vocab, texts, {o.batch_size, o.workers});

    const std::string path = o.out.empty() ? "predictions.csv" : o.out;
    std::ofstream csv(path, std::ios::trunc);
    if (!csv) throw DataError("cannot write " + path);
    csv << "id,label,score\n";
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& id = records[i].id;
        const bool quote = id.find_first_of(",\"\r\n") != std::string::npos;
        std::string field = id;
        if (quote) {
            field = "\"";
            for (char c : id) field += c == '"' ? std::string("\"\"") : std::string(1, c);
            field += '"';
        }
        csv << field << ',' << pred.labels[i] << ',' << format_fixed(pred.scores[i], 6) << '\n';
    }
    if (!csv) throw DataError("write failed: " + path);

    const double rate = pred.wall_seconds > 0 ? static_cast<double>(records.size()) / pred.wall_seconds : 0.0;
    out << "predicted " << records.size() << " notes in " << format_fixed(pred.wall_seconds, 3) << " s ("
        << format_fixed(rate, 1) << " notes/sec, " << o.workers << " worker" << (o.workers == 1 ? "" : "s") << ") -> " << path
        << '\n';

    const bool labelled = std::all_of(records.begin(), records.end(), [](const auto& r) { return r.label.has_value(); });
    if (labelled) {
        std::vector<int> gold;
        for (const auto& r : records) gold.push_back(*r.label);
        const auto s = eval::score(pred.labels, gold);
        out << "accuracy " << format_fixed(s.metrics.accuracy, 4) << "  precision " << format_fixed(s.metrics.precision, 4)
            << (s.metrics.precision_undefined ? " (undefined)" : "") << "  recall " << format_fixed(s.metrics.recall, 4)
            << (s.metrics.recall_undefined ? " (undefined)" : "") << "  f1 " << format_fixed(s.metrics.f1, 4) << "  (tp "
            << s.confusion.tp << ", fp " << s.confusion.fp << ", tn " << s.confusion.tn << ", fn " << s.confusion.fn << ")\n";
    }
    return kOk;
}

int cmd_grid(const Options& o, std::ostream& out, std::ostream& err) {
    require(o.data, "--data");
    require(o.init, "--init");
    require(o.vocab, "--vocab");
    train::GridSpec grid;
    for (const auto& s : split_list(o.grid_freeze)) grid.freezes.push_back(enc::freeze_from_string(s));
    for (const auto& s : split_list(o.grid_optimizer)) grid.optimizers.push_back(train::optimizer_from_string(s));
    for (const auto& s : split_list(o.grid_lr)) grid.lrs.push_back(parse_real(s, "--lr"));
    for (const auto& s : split_list(o.grid_dropout)) grid.drs.push_back(parse_real(s, "--dropout"));
    grid.validate();

    train::TrainConfig tcfg;
    tcfg.max_epochs = o.max_epochs;
    tcfg.patience = o.patience;
    tcfg.batch_size = o.batch_size;
    tcfg.train_fraction = o.train_fraction;
    tcfg.seed = o.seed;
    tcfg.repeats = o.repeats;
    tcfg.validate();

    const auto data = corpus::load_dataset(o.data, format_of(o.data));
    const auto vocab = tok::Vocab::load(o.vocab);
    const auto base = enc::load_archive(o.init);
    std::optional<std::filesystem::path> ckpt;
    if (!o.checkpoints.empty()) ckpt = o.checkpoints;
    auto run = train::make_train_run(data, base.params, base.config, vocab, tcfg, ckpt);

    std::mutex mu;
    std::size_t finished = 0;
    const std::size_t total = grid.cells() * o.repeats;
    auto logged = [&](const train::GridCell& cell, std::size_t repeat, std::uint64_t seed) {
        auto r = run(cell, repeat, seed);
        std::lock_guard lock(mu);
        err << "cell " << cell.index << " repeat " << repeat << ": " << enc::to_string(cell.freeze) << ' '
            << train::to_string(cell.optimizer) << " lr=" << format_real(cell.lr) << " dr=" << format_real(cell.dr)
            << " accuracy " << format_fixed(r.metrics.accuracy, 4) << " (" << ++finished << " new)\n";
        return r;
    };
    const auto results = train::run_grid(grid, {o.ledger, o.repeats, o.seed, o.workers}, logged);
    out << "grid: " << grid.cells() << " cells x " << o.repeats << " repeats = " << total << " runs; " << finished
        << " executed, " << results.size() - finished << " resumed from " << o.ledger << '\n';
    return kOk;
}

struct CellSpec {
    std::optional<std::string> freeze;
    std::string optimizer;
    double lr = 0.0, dr = 0.0;
};

CellSpec parse_cell(const std::string& s, const char* flag) {
    const auto parts = split_list(s);
    CellSpec c;
    std::size_t i = 0;
    if (parts.size() == 4) c.freeze = enc::to_string(enc::freeze_from_string(parts[i++]));
    else if (parts.size() != 3) throw UsageError(std::string(flag) + " expects \"[freeze,]optimizer,lr,dr\"");
    c.optimizer = train::to_string(train::optimizer_from_string(parts[i++]));
    c.lr = parse_real(parts[i++], flag);
    c.dr = parse_real(parts[i], flag);
    return c;
}

std::vector<double> cell_values(const std::vector<train::RunResult>& runs, const CellSpec& c, eval::Metric metric,
                                const char* flag) {
    std::set<std::string> freezes;
    std::vector<double> values;
    for (const auto& r : runs) {
        if (r.optimizer != c.optimizer || format_real(r.lr) != format_real(c.lr) || format_real(r.dr) != format_real(c.dr))
            continue;
        if (c.freeze && r.freeze != *c.freeze) continue;
        freezes.insert(r.freeze);
        values.push_back(metric == eval::Metric::accuracy ? r.metrics.accuracy
                         : metric == eval::Metric::f1     ? r.metrics.f1
                                                          : r.train_seconds);
    }
    if (values.empty()) throw DataError(std::string(flag) + ": no ledger rows match");
    if (freezes.size() > 1) throw UsageError(std::string(flag) + " matches several freeze variants; prefix it with one");
    return values;
}

int cmd_stats(const Options& o, std::ostream& out) {
    require(o.cell_a, "--cell-a");
    require(o.cell_b, "--cell-b");
    const auto runs = train::read_ledger(o.ledger);
    const auto metric = eval::metric_from_string(o.metric);
    const auto a = cell_values(runs, parse_cell(o.cell_a, "--cell-a"), metric, "--cell-a");
    const auto b = cell_values(runs, parse_cell(o.cell_b, "--cell-b"), metric, "--cell-b");
    const auto sa = eval::summarize(a), sb = eval::summarize(b);
    const auto t = eval::welch_ttest(a, b, o.alpha);
    out << "A " << o.cell_a << ": " << eval::to_string(metric) << " " << format_fixed(sa.mean, 4) << " ± "
        << format_fixed(sa.sd, 4) << " (n=" << sa.n << ")\n";
    out << "B " << o.cell_b << ": " << eval::to_string(metric) << " " << format_fixed(sb.mean, 4) << " ± "
        << format_fixed(sb.sd, 4) << " (n=" << sb.n << ")\n";
    out << "Welch t = " << format_fixed(t.t, 4) << ", df = " << format_fixed(t.df, 2) << ", p = " << format_fixed(t.p, 6)
        << (t.significant ? " < " : " >= ") << format_real(t.alpha) << ": "
        << (t.significant ? "significant" : "not significant") << '\n';
    return kOk;
}

int cmd_report(const Options& o, std::ostream& out) {
    const auto runs = train::read_ledger(o.ledger);
    const auto table = eval::aggregate(runs);
    const std::filesystem::path dir = o.out.empty() ? "report" : o.out;
    std::filesystem::create_directories(dir);
    eval::emit_report(table, dir / "report.csv");
    std::string text;
    for (auto m : {eval::Metric::accuracy, eval::Metric::f1, eval::Metric::seconds}) {
        text += eval::render_table(table, m) + "\n";
        eval::emit_plot_data(table, m, dir / ("plot_" + eval::to_string(m) + ".csv"));
    }
    eval::emit_svg(table, dir / "results.svg");
    std::ofstream(dir / "report.txt", std::ios::trunc) << text;
    out << text << "report (" << table.size() << " cells from " << runs.size() << " runs) -> " << dir.string() << '\n';
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
    Options o;
    CLI::App app{"Kinetic injury triage classification toolkit", "ktriage"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "ktriage 1.0");

    std::string config;
    auto common = [&](CLI::App* s) { s->add_option("--config", config, "JSON file of flag values; flags win"); };
    auto training = [&](CLI::App* s) {
        s->add_option("--freeze", o.freeze, "nn1 | nn2 | nn3")->capture_default_str();
        s->add_option("--optimizer", o.optimizer, "sgd | adam | adamw")->capture_default_str();
        s->add_option("--lr", o.lr, "Learning rate")->capture_default_str();
        s->add_option("--dropout", o.dropout, "Classifier dropout rate")->capture_default_str();
        s->add_option("--weight-decay", o.weight_decay, "AdamW decoupled weight decay")->capture_default_str();
    };
    auto loop = [&](CLI::App* s) {
        s->add_option("--batch-size", o.batch_size, "Minibatch size")->capture_default_str();
        s->add_option("--max-epochs", o.max_epochs, "Epoch cap")->capture_default_str();
        s->add_option("--patience", o.patience, "Epochs without improvement before stopping")->capture_default_str();
        s->add_option("--train-fraction", o.train_fraction, "Training share of the stratified split")->capture_default_str();
        s->add_option("--seed", o.seed, "Base seed")->capture_default_str();
    };
    CLI::Option* workers_opt = nullptr;
    auto workers = [&](CLI::App* s) {
        workers_opt = s->add_option("--workers", o.workers, "Worker threads (default: $KT_WORKERS or 1)")->capture_default_str();
    };

    auto* label = app.add_subcommand("label", "Label raw notes with include/exclude keyword rules");
    label->add_option("--data", o.data, "Raw notes (.jsonl or .csv)");
    label->add_option("--rules", o.rules, "Rule file (JSON)");
    label->add_option("--out", o.out, "Labelled output");
    common(label);

    auto* split = app.add_subcommand("split", "Seeded stratified train/validation split");
    split->add_option("--data", o.data, "Labelled records");
    split->add_option("--out", o.out, "Training split output");
    split->add_option("--val-out", o.val_out, "Validation split output");
    split->add_option("--train-fraction", o.train_fraction, "Training share")->capture_default_str();
    split->add_option("--seed", o.seed, "Split seed")->capture_default_str();
    common(split);

    auto* synth = app.add_subcommand("synth", "Write a synthetic keyword-separable corpus");
    synth->add_option("--out", o.out, "Output records");
    synth->add_option("--vocab", o.vocab, "Also write the matching vocabulary here");
    synth->add_option("--records", o.records, "Record count")->capture_default_str();
    synth->add_option("--domain", o.domain, "narrative | hospital")->capture_default_str();
    synth->add_option("--positive-fraction", o.positive_fraction, "Share of positive notes")->capture_default_str();
    synth->add_option("--seed", o.seed, "Generator seed")->capture_default_str();
    common(synth);

    auto* init = app.add_subcommand("init", "Write a randomly initialized toy encoder archive");
    init->add_option("--vocab", o.vocab, "Vocabulary (one token per line)");
    init->add_option("--out", o.out, "Archive output");
    init->add_option("--layers", o.layers, "Encoder layers")->capture_default_str();
    init->add_option("--hidden", o.hidden, "Hidden width")->capture_default_str();
    init->add_option("--heads", o.heads, "Attention heads")->capture_default_str();
    init->add_option("--ffn", o.ffn, "Feed-forward width")->capture_default_str();
    init->add_option("--max-len", o.max_len, "Tokenizer max length")->capture_default_str();
    init->add_option("--init-sigma", o.init_sigma, "Std of the truncated-normal init")->capture_default_str();
    init->add_option("--seed", o.seed, "Init seed")->capture_default_str();
    common(init);

    auto* finetune = app.add_subcommand("finetune", "Stage 1: fine-tune a base archive on labelled notes");
    finetune->add_option("--data", o.data, "Labelled records");
    finetune->add_option("--init", o.init, "Base archive");
    finetune->add_option("--vocab", o.vocab, "Vocabulary");
    finetune->add_option("--out", o.out, "Fine-tuned archive output");
    finetune->add_option("--history", o.history, "Per-epoch loss CSV");
    training(finetune);
    loop(finetune);
    common(finetune);

    auto* adapt = app.add_subcommand("adapt", "Stage 2: domain-adapt a fine-tuned archive (NN2/NN3 only)");
    adapt->add_option("--data", o.data, "Labelled target-domain records");
    adapt->add_option("--model", o.model, "Fine-tuned archive");
    adapt->add_option("--vocab", o.vocab, "Vocabulary");
    adapt->add_option("--out", o.out, "Adapted archive output");
    adapt->add_option("--history", o.history, "Per-epoch loss CSV");
    training(adapt);
    loop(adapt);
    common(adapt);

    auto* predict = app.add_subcommand("predict", "Label notes with a model; writes id,label,score");
    predict->add_option("--model", o.model, "Archive");
    predict->add_option("--vocab", o.vocab, "Vocabulary");
    predict->add_option("--data", o.data, "Notes (.jsonl or .csv; labels optional)");
    predict->add_option("--out", o.out, "Predictions CSV (default predictions.csv)");
    predict->add_option("--batch-size", o.batch_size, "Inference batch size")->capture_default_str();
    workers(predict);
    common(predict);
    CLI::Option* predict_workers = workers_opt;

    auto* grid = app.add_subcommand("grid", "Run every (freeze, optimizer, lr, dr) cell x repeats; resumable");
    grid->add_option("--data", o.data, "Labelled records");
    grid->add_option("--init", o.init, "Base archive");
    grid->add_option("--vocab", o.vocab, "Vocabulary");
    grid->add_option("--ledger", o.ledger, "Run ledger CSV (appended; completed runs are skipped)")->capture_default_str();
    grid->add_option("--checkpoints", o.checkpoints, "Directory for one archive per run");
    grid->add_option("--freeze", o.grid_freeze, "Comma list")->capture_default_str();
    grid->add_option("--optimizer", o.grid_optimizer, "Comma list")->capture_default_str();
    grid->add_option("--lr", o.grid_lr, "Comma list")->capture_default_str();
    grid->add_option("--dropout", o.grid_dropout, "Comma list")->capture_default_str();
    grid->add_option("--repeats", o.repeats, "Seeded repeats per cell")->capture_default_str();
    loop(grid);
    workers(grid);
    common(grid);
    CLI::Option* grid_workers = workers_opt;

    auto* stats = app.add_subcommand("stats", "Welch t-test between two ledger cells");
    stats->add_option("--ledger", o.ledger, "Run ledger CSV")->capture_default_str();
    stats->add_option("--cell-a", o.cell_a, "[freeze,]optimizer,lr,dr");
    stats->add_option("--cell-b", o.cell_b, "[freeze,]optimizer,lr,dr");
    stats->add_option("--metric", o.metric, "accuracy | f1 | seconds")->capture_default_str();
    stats->add_option("--alpha", o.alpha, "Significance level")->capture_default_str();
    common(stats);

    auto* report = app.add_subcommand("report", "Aggregate a ledger into tables, plot data and an SVG");
    report->add_option("--ledger", o.ledger, "Run ledger CSV")->capture_default_str();
    report->add_option("--out", o.out, "Output directory (default report)");
    common(report);

    try {
        auto args = merge_config(raw_args);
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::CallForVersion&) {
        out << app.version() << '\n';
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n";
        const auto subs = app.get_subcommands();
        err << (subs.empty() ? app.help() : subs.front()->help());
        return kUsage;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const DataError& e) {
        err << "error: " << e.what() << '\n';
        return kData;
    }

    CLI::App* sub = app.get_subcommands().front();
    try {
        CLI::Option* w = sub == predict ? predict_workers : sub == grid ? grid_workers : nullptr;
        if (w && w->count() == 0) {
            if (const char* env = std::getenv("KT_WORKERS")) {
                try {
                    const long v = std::stol(env);
                    if (v < 1) throw std::invalid_argument(env);
                    o.workers = static_cast<std::size_t>(v);
                } catch (const std::exception&) {
                    throw UsageError(std::string("KT_WORKERS must be a positive integer, got '") + env + "'");
                }
            }
        }
        if (o.workers < 1) throw UsageError("--workers must be >= 1");
        auto resolved = resolved_config(*sub);
        if (w) resolved["workers"] = std::to_string(o.workers);
        err << "config " << resolved.dump() << '\n';

        if (sub == label) return cmd_label(o, out);
        if (sub == split) return cmd_split(o, out);
        if (sub == synth) return cmd_synth(o, out);
        if (sub == init) return cmd_init(o, out);
        if (sub == finetune) return cmd_finetune(o, out, err);
        if (sub == adapt) return cmd_adapt(o, out, err);
        if (sub == predict) return cmd_predict(o, out);
        if (sub == grid) return cmd_grid(o, out, err);
        if (sub == stats) return cmd_stats(o, out);
        if (sub == report) return cmd_report(o, out);
        throw UsageError("unknown subcommand");
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << '\n';
        return kNumeric;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kData;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "data error: " << e.what() << '\n';
        return kData;
    }
}

}  // namespace kt::cli
