#pragma once

#include <cstddef>
#include <span>

namespace kt::eval {

struct Summary {
    double mean = 0.0;
    // Sample standard deviation (n - 1); 0 for a single value.
    double sd = 0.0;
    std::size_t n = 0;
};

// Throws DataError on an empty sample.
Summary summarize(std::span<const double> values);

struct TTestResult {
    double t = 0.0;
    // Welch-Satterthwaite degrees of freedom.
    double df = 0.0;
    // Two-tailed.
    double p = 1.0;
    double alpha = 0.05;
    bool significant = false;
};

// Welch unequal-variance two-sample test. Throws DataError when a side has
// fewer than two values or both variances are zero ("degenerate samples").
TTestResult welch_ttest(std::span<const double> a, std::span<const double> b, double alpha = 0.05);
TTestResult welch_from_summary(double mean_a, double sd_a, std::size_t n_a, double mean_b, double sd_b, std::size_t n_b,
                               double alpha = 0.05);

// Regularized incomplete beta I_x(a, b) by continued fraction.
double incomplete_beta(double a, double b, double x);
// P(T <= t) for Student's t with `df` > 0 degrees of freedom.
double student_t_cdf(double t, double df);

}  // namespace kt::eval
