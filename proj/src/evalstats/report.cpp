#include "kt/report.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "kt/error.hpp"
#include "kt/text.hpp"

namespace kt::eval {

std::string to_string(Metric m) {
    switch (m) {
        case Metric::accuracy: return "accuracy";
        case Metric::f1: return "f1";
        case Metric::seconds: return "seconds";
    }
    return "accuracy";
}

Metric metric_from_string(const std::string& s) {
    std::string l;
    for (char c : s) l.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (l == "accuracy" || l == "acc") return Metric::accuracy;
    if (l == "f1") return Metric::f1;
    if (l == "seconds" || l == "time") return Metric::seconds;
    throw UsageError("unknown metric '" + s + "' (expected accuracy, f1 or seconds)");
}

const Summary& pick(const CellStats& c, Metric m) {
    switch (m) {
        case Metric::accuracy: return c.accuracy;
        case Metric::f1: return c.f1;
        case Metric::seconds: return c.seconds;
    }
    return c.accuracy;
}

std::vector<CellStats> aggregate(const std::vector<train::RunResult>& runs) {
    if (runs.empty()) throw DataError("aggregate: no runs");
    struct Columns {
        std::vector<double> accuracy, f1, seconds;
    };
    std::map<CellKey, Columns> groups;
    for (const auto& r : runs) {
        auto& g = groups[CellKey{r.freeze, r.optimizer, r.lr, r.dr}];
        g.accuracy.push_back(r.metrics.accuracy);
        g.f1.push_back(r.metrics.f1);
        g.seconds.push_back(r.train_seconds);
    }
    std::vector<CellStats> out;
    for (const auto& [key, g] : groups) out.push_back({key, summarize(g.accuracy), summarize(g.f1), summarize(g.seconds)});
    return out;
}

std::vector<train::RunResult> select(const std::vector<train::RunResult>& runs, const CellKey& key) {
    std::vector<train::RunResult> out;
    for (const auto& r : runs)
        if (CellKey{r.freeze, r.optimizer, r.lr, r.dr} == key) out.push_back(r);
    return out;
}

namespace {

std::string column_label(double lr, double dr) {
    return "(" + format_real(lr) + ", " + format_real(dr) + ")";
}

int digits_for(Metric m) {
    return m == Metric::seconds ? 1 : 3;
}

std::string cell_text(const Summary& s, Metric m) {
    return format_fixed(s.mean, digits_for(m)) + " ± " + format_fixed(s.sd, digits_for(m));
}

// Display width of UTF-8 text.
std::size_t width(const std::string& s) {
    std::size_t w = 0;
    for (unsigned char c : s) w += (c & 0xC0) != 0x80;
    return w;
}

std::string pad(const std::string& s, std::size_t w) {
    return s + std::string(w > width(s) ? w - width(s) : 0, ' ');
}

bool better(double a, double b, Metric m) {
    return m == Metric::seconds ? a < b : a > b;
}

}  // namespace

std::string render_table(const std::vector<CellStats>& table, Metric metric) {
    if (table.empty()) throw DataError("report: empty table");
    std::map<std::string, std::vector<const CellStats*>> by_freeze;
    for (const auto& c : table) by_freeze[c.key.freeze].push_back(&c);

    std::ostringstream out;
    bool first_block = true;
    for (const auto& [freeze, cells] : by_freeze) {
        std::set<std::pair<double, double>> columns;
        std::set<std::string> optimizers;
        std::map<std::pair<std::string, std::pair<double, double>>, const CellStats*> at;
        for (const auto* c : cells) {
            columns.insert({c->key.lr, c->key.dr});
            optimizers.insert(c->key.optimizer);
            at[{c->key.optimizer, {c->key.lr, c->key.dr}}] = c;
        }
        std::vector<std::vector<std::string>> grid;
        std::vector<std::string> header = {freeze + " " + to_string(metric)};
        for (const auto& [lr, dr] : columns) header.push_back(column_label(lr, dr));
        grid.push_back(header);
        for (const auto& opt : optimizers) {
            const CellStats* best = nullptr;
            for (const auto& col : columns) {
                auto it = at.find({opt, col});
                if (it == at.end()) continue;
                if (!best || better(pick(*it->second, metric).mean, pick(*best, metric).mean, metric)) best = it->second;
            }
            std::vector<std::string> row = {opt};
            for (const auto& col : columns) {
                auto it = at.find({opt, col});
                if (it == at.end()) {
                    row.push_back("-");
                    continue;
                }
                row.push_back(cell_text(pick(*it->second, metric), metric) + (it->second == best ? " *" : ""));
            }
            grid.push_back(row);
        }
        std::vector<std::size_t> widths(header.size(), 0);
        for (const auto& row : grid)
            for (std::size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], width(row[i]));
        if (!first_block) out << '\n';
        first_block = false;
        for (std::size_t r = 0; r < grid.size(); ++r) {
            for (std::size_t i = 0; i < grid[r].size(); ++i) out << (i ? "  " : "") << pad(grid[r][i], widths[i]);
            out << '\n';
            if (r == 0) {
                std::size_t total = 0;
                for (auto w : widths) total += w + 2;
                out << std::string(total - 2, '-') << '\n';
            }
        }
    }
    out << "* best " << to_string(metric) << " per optimizer\n";
    return out.str();
}

void emit_report(const std::vector<CellStats>& table, const std::filesystem::path& path) {
    if (table.empty()) throw DataError("report: empty table");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << "freeze,optimizer,lr,dr,n,accuracy_mean,accuracy_sd,f1_mean,f1_sd,seconds_mean,seconds_sd\n";
    for (const auto& c : table) {
        out << c.key.freeze << ',' << c.key.optimizer << ',' << format_real(c.key.lr) << ',' << format_real(c.key.dr) << ','
            << c.accuracy.n << ',' << format_real(c.accuracy.mean) << ',' << format_real(c.accuracy.sd) << ','
            << format_real(c.f1.mean) << ',' << format_real(c.f1.sd) << ',' << format_real(c.seconds.mean) << ','
            << format_real(c.seconds.sd) << '\n';
    }
}

void emit_plot_data(const std::vector<CellStats>& table, Metric metric, const std::filesystem::path& path) {
    if (table.empty()) throw DataError("plot data: empty table");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << "metric,group,freeze,optimizer,lr,dr,mean,sd,n\n";
    for (const auto& c : table) {
        const auto& s = pick(c, metric);
        out << to_string(metric) << ",\"" << c.key.freeze << ' ' << column_label(c.key.lr, c.key.dr) << "\"," << c.key.freeze
            << ',' << c.key.optimizer << ',' << format_real(c.key.lr) << ',' << format_real(c.key.dr) << ','
            << format_real(s.mean) << ',' << format_real(s.sd) << ',' << s.n << '\n';
    }
}

namespace {

const char* kPalette[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"};

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

}  // namespace

void emit_svg(const std::vector<CellStats>& table, const std::filesystem::path& path) {
    if (table.empty()) throw DataError("svg: empty table");
    std::vector<std::string> groups;
    std::vector<std::string> optimizers;
    std::map<std::pair<std::string, std::string>, const CellStats*> at;
    for (const auto& c : table) {
        const std::string g = c.key.freeze + " " + column_label(c.key.lr, c.key.dr);
        if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
        if (std::find(optimizers.begin(), optimizers.end(), c.key.optimizer) == optimizers.end())
            optimizers.push_back(c.key.optimizer);
        at[{g, c.key.optimizer}] = &c;
    }

    const double bar_w = 10.0, group_gap = 14.0, panel_h = 220.0, top = 40.0, left = 60.0, label_h = 110.0;
    const double group_w = bar_w * static_cast<double>(optimizers.size()) + group_gap;
    const double panel_w = left + group_w * static_cast<double>(groups.size()) + 20.0;
    const Metric panels[] = {Metric::accuracy, Metric::f1, Metric::seconds};
    const double total_w = panel_w * 3, total_h = top + panel_h + label_h + 20.0 * static_cast<double>(optimizers.size());

    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << format_fixed(total_w, 0) << "\" height=\""
        << format_fixed(total_h, 0) << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (std::size_t p = 0; p < 3; ++p) {
        const Metric m = panels[p];
        double hi = 0.0;
        for (const auto& c : table) hi = std::max(hi, pick(c, m).mean + pick(c, m).sd);
        if (m != Metric::seconds) hi = std::max(hi, 1.0);
        if (hi <= 0.0) hi = 1.0;
        const double x0 = panel_w * static_cast<double>(p) + left, y0 = top + panel_h;
        auto y_of = [&](double v) { return y0 - panel_h * v / hi; };
        out << "<text x=\"" << format_fixed(x0, 1) << "\" y=\"20\" font-size=\"13\">" << to_string(m) << "</text>\n";
        out << "<line x1=\"" << format_fixed(x0, 1) << "\" y1=\"" << format_fixed(top, 1) << "\" x2=\"" << format_fixed(x0, 1)
            << "\" y2=\"" << format_fixed(y0, 1) << "\" stroke=\"black\"/>\n";
        out << "<line x1=\"" << format_fixed(x0, 1) << "\" y1=\"" << format_fixed(y0, 1) << "\" x2=\""
            << format_fixed(x0 + group_w * static_cast<double>(groups.size()), 1) << "\" y2=\"" << format_fixed(y0, 1)
            << "\" stroke=\"black\"/>\n";
        for (int tick = 0; tick <= 4; ++tick) {
            const double v = hi * tick / 4.0;
            out << "<text x=\"" << format_fixed(x0 - 4, 1) << "\" y=\"" << format_fixed(y_of(v) + 3, 1)
                << "\" text-anchor=\"end\">" << format_fixed(v, m == Metric::seconds ? 0 : 2) << "</text>\n";
        }
        for (std::size_t g = 0; g < groups.size(); ++g) {
            const double gx = x0 + group_w * static_cast<double>(g) + group_gap / 2;
            for (std::size_t o = 0; o < optimizers.size(); ++o) {
                auto it = at.find({groups[g], optimizers[o]});
                if (it == at.end()) continue;
                const auto& s = pick(*it->second, m);
                const double bx = gx + bar_w * static_cast<double>(o);
                out << "<rect x=\"" << format_fixed(bx, 1) << "\" y=\"" << format_fixed(y_of(s.mean), 1) << "\" width=\""
                    << format_fixed(bar_w - 1, 1) << "\" height=\"" << format_fixed(y0 - y_of(s.mean), 1) << "\" fill=\""
                    << kPalette[o % 6] << "\"/>\n";
                const double cx = bx + (bar_w - 1) / 2;
                out << "<line x1=\"" << format_fixed(cx, 1) << "\" y1=\"" << format_fixed(y_of(s.mean + s.sd), 1)
                    << "\" x2=\"" << format_fixed(cx, 1) << "\" y2=\"" << format_fixed(y_of(std::max(0.0, s.mean - s.sd)), 1)
                    << "\" stroke=\"black\"/>\n";
            }
            const double lx = gx + bar_w * static_cast<double>(optimizers.size()) / 2, ly = y0 + 8;
            out << "<text x=\"" << format_fixed(lx, 1) << "\" y=\"" << format_fixed(ly, 1) << "\" transform=\"rotate(60 "
                << format_fixed(lx, 1) << ' ' << format_fixed(ly, 1) << ")\">" << xml_escape(groups[g]) << "</text>\n";
        }
    }
    for (std::size_t o = 0; o < optimizers.size(); ++o) {
        const double ly = top + panel_h + label_h + 20.0 * static_cast<double>(o);
        out << "<rect x=\"" << format_fixed(left, 1) << "\" y=\"" << format_fixed(ly - 9, 1) << "\" width=\"10\" height=\"10\" fill=\""
            << kPalette[o % 6] << "\"/>\n";
        out << "<text x=\"" << format_fixed(left + 14, 1) << "\" y=\"" << format_fixed(ly, 1) << "\">"
            << xml_escape(optimizers[o]) << "</text>\n";
    }
    out << "</svg>\n";
}

}  // namespace kt::eval
