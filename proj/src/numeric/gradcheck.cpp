#include "kt/gradcheck.hpp"

#include <cmath>
#include <numeric>

#include "kt/error.hpp"
#include "kt/rng.hpp"

namespace kt::num {

namespace {

double evaluate(const Objective& f, const NamedTensors<double>& params) {
    Tape<double> tape(false);
    BoundParams bound;
    for (const auto& [name, t] : params) bound.emplace(name, tape.parameter(name, t, false));
    const double v = f(tape, bound).value()[0];
    if (!std::isfinite(v)) throw NumericError("grad_check: objective is not finite");
    return v;
}

}  // namespace

GradCheckReport grad_check(const Objective& f, const NamedTensors<double>& params, const std::set<std::string>& trainable,
                           const GradCheckOptions& opts) {
    if (!(opts.step > 0.0)) throw NumericError("grad_check: step must be positive");
    for (const auto& name : trainable)
        if (!params.count(name)) throw NumericError("grad_check: unknown parameter '" + name + "'");

    GradientMap<double> analytic;
    {
        Tape<double> tape(true);
        BoundParams bound;
        for (const auto& [name, t] : params) bound.emplace(name, tape.parameter(name, t, trainable.count(name) > 0));
        auto loss = f(tape, bound);
        if (!std::isfinite(loss.value()[0])) throw NumericError("grad_check: objective is not finite");
        analytic = tape.backward(loss);
    }

    GradCheckReport report;
    NamedTensors<double> probe = params;
    SplitMix64 rng(hash_combine({opts.seed, 0x67636b}));
    const double h = opts.step;
    for (const auto& name : trainable) {
        auto& t = probe.at(name);
        const auto& g = analytic.at(name);
        std::vector<std::size_t> coords(t.size());
        std::iota(coords.begin(), coords.end(), 0);
        if (opts.probes_per_tensor > 0 && opts.probes_per_tensor < coords.size()) {
            seeded_shuffle(coords.begin(), coords.end(), rng);
            coords.resize(opts.probes_per_tensor);
        }
        double tensor_max = 0.0;
        for (std::size_t i : coords) {
            const double orig = t[i];
            auto central = [&](double step) {
                t[i] = orig + step;
                const double up = evaluate(f, probe);
                t[i] = orig - step;
                const double down = evaluate(f, probe);
                t[i] = orig;
                return (up - down) / (2.0 * step);
            };
            const double numeric = opts.richardson ? (4.0 * central(h / 2) - central(h)) / 3.0 : central(h);
            const double a = g[i];
            ++report.coordinates;
            if (std::abs(a) <= opts.zero_tolerance && std::abs(numeric) <= opts.zero_tolerance) {
                ++report.structural_zeros;
                ++report.zeros_per_tensor[name];
                continue;
            }
            const double rel = std::abs(a - numeric) / std::max(1e-12, std::abs(a) + std::abs(numeric));
            tensor_max = std::max(tensor_max, rel);
            if (rel > report.max_rel_error || report.worst_tensor.empty()) {
                report.max_rel_error = rel;
                report.worst_tensor = name;
                report.worst_index = i;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
        report.per_tensor[name] = tensor_max;
    }
    return report;
}

}  // namespace kt::num
