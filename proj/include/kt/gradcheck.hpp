#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>

#include "kt/tape.hpp"

namespace kt::num {

using BoundParams = BoundVars<double>;

// Builds a scalar loss from bound parameters. Must be a pure function of the
// parameter values so it can be re-evaluated at perturbed points.
using Objective = std::function<Var<double>(Tape<double>&, const BoundParams&)>;

struct GradCheckOptions {
    double step = 1e-5;
    // Coordinates probed per tensor; 0 probes every coordinate.
    std::size_t probes_per_tensor = 0;
    std::uint64_t seed = 0;
    // Coordinates where both |analytic| and |numeric| fall at or below this
    // bound are structural zeros (e.g. a softmax-invariant key bias) and are
    // reported separately instead of entering the relative error.
    double zero_tolerance = 0.0;
    // Combine central differences at h and h/2 as (4 D(h/2) - D(h)) / 3,
    // cancelling the h^2 truncation term so a larger step (and a lower
    // rounding floor) can be used.
    bool richardson = false;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_tensor;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t coordinates = 0;
    std::size_t structural_zeros = 0;
    // Per-tensor maximum relative error.
    std::map<std::string, double> per_tensor;
    // Per-tensor count of coordinates classified as structural zeros.
    std::map<std::string, std::size_t> zeros_per_tensor;
};

// Compares reverse-mode gradients against central differences
// (f(x+h) - f(x-h)) / 2h for every probed coordinate of every tensor named in
// `trainable`. Relative error is |a - n| / max(1e-12, |a| + |n|).
// Throws NumericError for h <= 0 or a non-finite objective.
GradCheckReport grad_check(const Objective& f, const NamedTensors<double>& params, const std::set<std::string>& trainable,
                           const GradCheckOptions& opts = {});

}  // namespace kt::num
