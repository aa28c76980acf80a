#include "kt/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "kt/error.hpp"

namespace kt::eval {

namespace {

double sample_variance(std::span<const double> v, double mean) {
    if (v.size() < 2) return 0.0;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return ss / static_cast<double>(v.size() - 1);
}

// Shifted by the first value so a constant sample has an exact mean.
double mean_of(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x - v.front();
    return v.front() + s / static_cast<double>(v.size());
}

// Modified Lentz evaluation of the incomplete-beta continued fraction.
double beta_fraction(double a, double b, double x) {
    constexpr int kMaxIter = 10000;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) return h;
    }
    throw NumericError("incomplete beta: continued fraction did not converge");
}

TTestResult welch_core(double mean_a, double var_a, std::size_t n_a, double mean_b, double var_b, std::size_t n_b,
                       double alpha) {
    if (n_a < 2 || n_b < 2) throw DataError("t-test: each sample needs at least two values");
    if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("t-test: alpha must lie in (0, 1)");
    if (!(var_a >= 0.0 && var_b >= 0.0)) throw DataError("t-test: negative or non-finite variance");
    if (var_a == 0.0 && var_b == 0.0) throw DataError("degenerate samples: both variances are zero");
    const double sa = var_a / static_cast<double>(n_a), sb = var_b / static_cast<double>(n_b);
    const double se2 = sa + sb;
    TTestResult r;
    r.alpha = alpha;
    r.t = (mean_a - mean_b) / std::sqrt(se2);
    r.df = se2 * se2 / (sa * sa / static_cast<double>(n_a - 1) + sb * sb / static_cast<double>(n_b - 1));
    r.p = incomplete_beta(r.df / 2.0, 0.5, r.df / (r.df + r.t * r.t));
    r.p = std::min(1.0, std::max(0.0, r.p));
    r.significant = r.p < alpha;
    return r;
}

}  // namespace

Summary summarize(std::span<const double> values) {
    if (values.empty()) throw DataError("summary of an empty sample");
    Summary s;
    s.n = values.size();
    s.mean = mean_of(values);
    s.sd = std::sqrt(sample_variance(values, s.mean));
    return s;
}

double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0 && b > 0.0)) throw NumericError("incomplete beta: shape parameters must be positive");
    if (!(x >= 0.0 && x <= 1.0)) throw NumericError("incomplete beta: x outside [0, 1]");
    if (x == 0.0 || x == 1.0) return x;
    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_fraction(a, b, x) / a;
    return 1.0 - front * beta_fraction(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double df) {
    if (!(df > 0.0)) throw NumericError("Student t: degrees of freedom must be positive");
    if (std::isnan(t)) throw NumericError("Student t: t is NaN");
    if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
    const double tail = 0.5 * incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
    return t > 0 ? 1.0 - tail : tail;
}

TTestResult welch_ttest(std::span<const double> a, std::span<const double> b, double alpha) {
    if (a.size() < 2 || b.size() < 2) throw DataError("t-test: each sample needs at least two values");
    const double ma = mean_of(a), mb = mean_of(b);
    return welch_core(ma, sample_variance(a, ma), a.size(), mb, sample_variance(b, mb), b.size(), alpha);
}

TTestResult welch_from_summary(double mean_a, double sd_a, std::size_t n_a, double mean_b, double sd_b, std::size_t n_b,
                               double alpha) {
    if (!(sd_a >= 0.0 && sd_b >= 0.0)) throw DataError("t-test: standard deviations must be non-negative");
    return welch_core(mean_a, sd_a * sd_a, n_a, mean_b, sd_b * sd_b, n_b, alpha);
}

}  // namespace kt::eval
