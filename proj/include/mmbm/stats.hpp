#pragma once

#include "mmbm/model.hpp"

#include <span>
#include <utility>
#include <vector>

namespace mmbm {

/// E[(Y - E Y)^k] for Y ~ Erlang(a, b), from the central-moment recursion
/// m_{k+1} = k! a sum_{i<k} m_i / i! at unit rate, scaled by b^{-k}.
double erlang_central_moment(int a, double b, int k);

/// k! sqrt(a) (sqrt(a)^{k+1} - 1) / ((sqrt(a) - 1) b^k); requires a >= 2, k >= 1.
double erlang_moment_bound(int a, double b, int k);

/// Tail bound for sup_{s<=t} |R(s)|. `as_written` uses sigma_max inside the
/// Gaussian scale in both the scale and the exponent, `conservative` doubles it.
/// The `_variance` pair replaces sigma_max by sigma_max^2, which is the
/// dimensionally consistent reading.
struct SupBound {
    double as_written = 0.0;
    double conservative = 0.0;
    double as_written_variance = 0.0;
    double conservative_variance = 0.0;
};

SupBound mmbm_sup_bound(const MmbmParams& params, double t, double a);

struct TestOutcome {
    double statistic = 0.0;
    double critical = 0.0;
    double dof = 0.0;
    bool pass = false;
};

/// Asymptotic Kolmogorov critical value c(alpha) from the two-term series
/// alpha = 2 (e^{-2c^2} - e^{-8c^2}).
double kolmogorov_critical(double alpha);

/// One-sample KS test against Exp(rate); pass iff D < c(alpha)/sqrt(N). Needs N >= 50.
TestOutcome ks_exponential(std::span<const double> samples, double rate, double alpha = 0.01);

/// Two-sample KS test; pass iff D < c(alpha) sqrt((n + m)/(n m)).
TestOutcome ks_two_sample(std::span<const double> a, std::span<const double> b, double alpha = 0.01);

/// Standard normal quantile.
double normal_quantile(double p);

/// Upper-alpha chi-square critical value (Wilson-Hilferty).
double chi_square_critical(double dof, double alpha);

/// Pearson test of observed transition counts of `chain` against P. Within
/// each row, cells with expected count < 5 are pooled. Needs length >= 100 m^2.
TestOutcome chi_square_transitions(std::span<const int> chain, const Matrix& P, double alpha = 0.01);

struct RateFit {
    std::vector<std::pair<double, double>> points;
    double slope = 0.0;
    double intercept = 0.0;
    double slope_logcorrected = 0.0;
    double intercept_logcorrected = 0.0;
    double rss = 0.0;
    double rss_logcorrected = 0.0;
};

/// Least squares of log(statistic) and log(statistic / log n) against log n.
RateFit fit_rate(std::span<const std::pair<double, double>> points);

double mean(std::span<const double> xs);
/// Standard error of the mean (sample standard deviation / sqrt(N)).
double standard_error(std::span<const double> xs);
double median(std::vector<double> xs);

}  // namespace mmbm
