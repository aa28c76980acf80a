#include "kt/grid.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include "kt/archive.hpp"
#include "kt/error.hpp"
#include "kt/rng.hpp"
#include "kt/text.hpp"

namespace kt::train {

GridSpec GridSpec::full() {
    return {{enc::FreezeVariant::nn1_head_only, enc::FreezeVariant::nn2_last_layer, enc::FreezeVariant::nn3_last_two_layers},
            {OptimizerKind::sgd, OptimizerKind::adam, OptimizerKind::adamw},
            {0.0001, 0.0005, 0.005},
            {0.15, 0.20, 0.25}};
}

namespace {

template <typename V>
void check_dimension(const std::vector<V>& v, const char* what) {
    if (v.empty()) throw UsageError(std::string("grid: empty ") + what + " dimension");
    std::vector<V> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw UsageError(std::string("grid: repeated value in ") + what + " dimension");
}

}  // namespace

void GridSpec::validate() const {
    check_dimension(freezes, "freeze");
    check_dimension(optimizers, "optimizer");
    check_dimension(lrs, "learning-rate");
    check_dimension(drs, "dropout");
    for (double lr : lrs)
        if (!(lr >= 0.0)) throw UsageError("grid: learning rates must be >= 0");
    for (double dr : drs)
        if (!(dr >= 0.0 && dr < 1.0)) throw UsageError("grid: dropout rates must lie in [0, 1)");
}

std::size_t GridSpec::cells() const noexcept {
    return freezes.size() * optimizers.size() * lrs.size() * drs.size();
}

GridCell GridSpec::cell(std::size_t index) const {
    if (index >= cells()) throw UsageError("grid: cell index " + std::to_string(index) + " out of range");
    GridCell c;
    c.index = index;
    std::size_t rest = index;
    c.dr = drs[rest % drs.size()];
    rest /= drs.size();
    c.lr = lrs[rest % lrs.size()];
    rest /= lrs.size();
    c.optimizer = optimizers[rest % optimizers.size()];
    rest /= optimizers.size();
    c.freeze = freezes[rest];
    return c;
}

std::vector<GridCell> GridSpec::enumerate() const {
    validate();
    std::vector<GridCell> out;
    out.reserve(cells());
    for (std::size_t i = 0; i < cells(); ++i) out.push_back(cell(i));
    return out;
}

std::uint64_t run_seed(std::uint64_t base_seed, std::size_t cell_index, std::size_t repeat) {
    return hash_combine({base_seed, static_cast<std::uint64_t>(cell_index), static_cast<std::uint64_t>(repeat)});
}

const char* const kLedgerHeader =
    "freeze,optimizer,lr,dr,repeat,seed,epochs_run,best_epoch,best_val_loss,accuracy,precision,recall,f1,train_seconds,"
    "checkpoint";

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                fields.back() += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                fields.back() += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.emplace_back();
        } else {
            fields.back() += c;
        }
    }
    return fields;
}

template <typename V>
V parse_number(const std::string& s, const std::string& where) {
    V v{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) throw DataError(where + ": bad number '" + s + "'");
    return v;
}

using RunKey = std::tuple<std::string, std::string, std::string, std::string, std::size_t>;

RunKey key_of(const std::string& freeze, const std::string& optimizer, double lr, double dr, std::size_t repeat) {
    return {freeze, optimizer, format_real(lr), format_real(dr), repeat};
}

RunKey key_of(const RunResult& r) {
    return key_of(r.freeze, r.optimizer, r.lr, r.dr, r.repeat);
}

}  // namespace

std::string ledger_row(const RunResult& r) {
    std::ostringstream out;
    out << r.freeze << ',' << r.optimizer << ',' << format_real(r.lr) << ',' << format_real(r.dr) << ',' << r.repeat << ','
        << r.seed << ',' << r.epochs_run << ',' << r.best_epoch << ',' << format_real(r.best_val_loss) << ','
        << format_real(r.metrics.accuracy) << ',' << format_real(r.metrics.precision) << ','
        << format_real(r.metrics.recall) << ',' << format_real(r.metrics.f1) << ',' << format_real(r.train_seconds) << ','
        << csv_field(r.checkpoint);
    return out.str();
}

std::vector<RunResult> read_ledger(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open ledger " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kLedgerHeader)
        throw DataError(path.string() + ": not a run ledger (header mismatch)");
    std::vector<RunResult> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = path.string() + ":" + std::to_string(line_no);
        if (in.eof()) break;  // no trailing newline: the write was interrupted
        const auto f = split_csv_line(line);
        if (f.size() != 15) throw DataError(where + ": expected 15 fields, found " + std::to_string(f.size()));
        RunResult r;
        r.freeze = f[0];
        r.optimizer = f[1];
        r.lr = parse_number<double>(f[2], where);
        r.dr = parse_number<double>(f[3], where);
        r.repeat = parse_number<std::size_t>(f[4], where);
        r.seed = parse_number<std::uint64_t>(f[5], where);
        r.epochs_run = parse_number<std::size_t>(f[6], where);
        r.best_epoch = parse_number<std::size_t>(f[7], where);
        r.best_val_loss = parse_number<double>(f[8], where);
        r.metrics.accuracy = parse_number<double>(f[9], where);
        r.metrics.precision = parse_number<double>(f[10], where);
        r.metrics.recall = parse_number<double>(f[11], where);
        r.metrics.f1 = parse_number<double>(f[12], where);
        r.train_seconds = parse_number<double>(f[13], where);
        r.checkpoint = f[14];
        out.push_back(std::move(r));
    }
    return out;
}

namespace {

// Opens the ledger for appending, creating it with a header or cutting an
// interrupted final line.
std::ofstream open_ledger(const std::filesystem::path& path) {
    if (std::filesystem::exists(path)) {
        std::ifstream in(path, std::ios::binary);
        std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        in.close();
        if (!content.empty() && content.back() != '\n') {
            content.erase(content.rfind('\n') == std::string::npos ? 0 : content.rfind('\n') + 1);
            std::ofstream rewrite(path, std::ios::binary | std::ios::trunc);
            rewrite << content;
        }
        if (!content.empty()) return std::ofstream(path, std::ios::binary | std::ios::app);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write ledger " + path.string());
    out << kLedgerHeader << '\n';
    out.flush();
    return out;
}

}  // namespace

std::vector<RunResult> run_grid(const GridSpec& grid, const GridOptions& opts, const RunFn& run) {
    const auto cells = grid.enumerate();
    if (opts.repeats < 1) throw UsageError("grid: repeats must be >= 1");
    if (opts.ledger.empty()) throw UsageError("grid: ledger path required");

    struct Job {
        GridCell cell;
        std::size_t repeat;
        std::uint64_t seed;
    };
    std::map<RunKey, std::pair<std::size_t, std::size_t>> position;  // key -> (cell, repeat)
    std::map<RunKey, std::uint64_t> expected_seed;
    std::vector<Job> all;
    for (const auto& c : cells)
        for (std::size_t rep = 0; rep < opts.repeats; ++rep) {
            const auto key = key_of(enc::to_string(c.freeze), to_string(c.optimizer), c.lr, c.dr, rep);
            position[key] = {c.index, rep};
            expected_seed[key] = run_seed(opts.base_seed, c.index, rep);
            all.push_back({c, rep, expected_seed[key]});
        }

    std::map<RunKey, RunResult> done;
    if (std::filesystem::exists(opts.ledger) && std::filesystem::file_size(opts.ledger) > 0) {
        for (auto& r : read_ledger(opts.ledger)) {
            const auto key = key_of(r);
            auto it = expected_seed.find(key);
            if (it == expected_seed.end()) continue;
            if (it->second != r.seed)
                throw DataError("ledger row " + r.freeze + "/" + r.optimizer + "/" + format_real(r.lr) + "/" +
                                format_real(r.dr) + " repeat " + std::to_string(r.repeat) +
                                " was produced with a different base seed");
            done[key] = std::move(r);
        }
    }

    std::vector<Job> pending;
    for (const auto& j : all)
        if (!done.count(key_of(enc::to_string(j.cell.freeze), to_string(j.cell.optimizer), j.cell.lr, j.cell.dr, j.repeat)))
            pending.push_back(j);

    std::ofstream ledger = open_ledger(opts.ledger);
    std::mutex mu;
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;

    auto worker = [&] {
        while (!failed) {
            const std::size_t i = next++;
            if (i >= pending.size()) return;
            const Job& job = pending[i];
            try {
                RunResult r = run(job.cell, job.repeat, job.seed);
                r.freeze = enc::to_string(job.cell.freeze);
                r.optimizer = to_string(job.cell.optimizer);
                r.lr = job.cell.lr;
                r.dr = job.cell.dr;
                r.repeat = job.repeat;
                r.seed = job.seed;
                std::lock_guard lock(mu);
                ledger << ledger_row(r) << '\n';
                ledger.flush();
                if (!ledger) throw DataError("ledger write failed");
                done[key_of(r)] = std::move(r);
            } catch (...) {
                std::lock_guard lock(mu);
                if (!error) error = std::current_exception();
                failed = true;
            }
        }
    };

    const std::size_t workers = std::clamp<std::size_t>(opts.workers, 1, std::max<std::size_t>(pending.size(), 1));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (error) std::rethrow_exception(error);

    std::vector<std::pair<std::pair<std::size_t, std::size_t>, RunResult>> ordered;
    for (auto& [key, r] : done) ordered.push_back({position.at(key), std::move(r)});
    std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<RunResult> out;
    out.reserve(ordered.size());
    for (auto& [pos, r] : ordered) out.push_back(std::move(r));
    return out;
}

RunFn make_train_run(const corpus::LabelledDataset& data, const enc::ModelParams& init, const enc::ModelConfig& cfg,
                     const tok::Vocab& vocab, const TrainConfig& tcfg, std::optional<std::filesystem::path> checkpoint_dir) {
    tcfg.validate();
    if (checkpoint_dir) std::filesystem::create_directories(*checkpoint_dir);
    return [&data, &init, &cfg, &vocab, tcfg, checkpoint_dir](const GridCell& cell, std::size_t repeat, std::uint64_t seed) {
        TrainPlan plan;
        plan.freeze = enc::FreezeConfig{cell.freeze};
        plan.optimizer.kind = cell.optimizer;
        plan.optimizer.lr = cell.lr;
        plan.dropout = cell.dr;
        plan.config = tcfg;
        plan.config.seed = seed;
        auto outcome = train(data, init, cfg, vocab, plan);
        outcome.result.repeat = repeat;
        if (checkpoint_dir) {
            const auto path = *checkpoint_dir / ("cell" + std::to_string(cell.index) + "_r" + std::to_string(repeat) + ".nta");
            enc::save_archive(outcome.params, outcome.config, path);
            outcome.result.checkpoint = path.string();
        }
        return outcome.result;
    };
}

}  // namespace kt::train
