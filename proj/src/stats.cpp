#include "mmbm/stats.hpp"

#include "mmbm/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <limits>
#include <set>

namespace mmbm {

double erlang_central_moment(int a, double b, int k) {
    if (a < 1 || !(b > 0.0) || k < 0) {
        throw Error(ErrorCode::DomainError, fmt::format("Erlang moment needs a >= 1, b > 0, k >= 0 (got {}, {}, {})",
                                                        a, b, k));
    }
    std::vector<double> m{1.0, 0.0};
    for (int j = 1; j < k; ++j) {
        // m_{j+1} = a * sum_{i<j} m_i * j!/i!, with j!/i! accumulated as an integer product.
        double sum = 0.0;
        double falling = 1.0;
        for (int i = j - 1; i >= 0; --i) {
            falling *= static_cast<double>(i + 1);
            sum += m[static_cast<std::size_t>(i)] * falling;
        }
        m.push_back(static_cast<double>(a) * sum);
    }
    return m[static_cast<std::size_t>(k)] / std::pow(b, k);
}

double erlang_moment_bound(int a, double b, int k) {
    if (a < 2 || !(b > 0.0) || k < 1) {
        throw Error(ErrorCode::DomainError,
                    fmt::format("Erlang moment bound needs a >= 2, b > 0, k >= 1 (got {}, {}, {})", a, b, k));
    }
    const double r = std::sqrt(static_cast<double>(a));
    const double factorial = std::tgamma(static_cast<double>(k) + 1.0);
    return factorial * r * (std::pow(r, k + 1) - 1.0) / ((r - 1.0) * std::pow(b, k));
}

SupBound mmbm_sup_bound(const MmbmParams& params, double t, double a) {
    const double mu_max = params.mu.cwiseAbs().maxCoeff();
    const double sigma_max = params.sigma.maxCoeff();
    if (!(t > 0.0) || !(a > mu_max * t)) {
        throw Error(ErrorCode::DomainError,
                    fmt::format("sup bound needs t > 0 and a > mu_max t (t = {}, a = {}, mu_max = {})", t, a, mu_max));
    }
    const double gap = a - mu_max * t;
    auto bound = [&](double scale) {
        return (2.0 / std::sqrt(2.0 * std::numbers::pi)) * (std::sqrt(scale * t) / gap) *
               std::exp(-gap * gap / (2.0 * scale * t));
    };
    SupBound out;
    out.as_written = bound(sigma_max);
    out.conservative = 2.0 * out.as_written;
    out.as_written_variance = bound(sigma_max * sigma_max);
    out.conservative_variance = 2.0 * out.as_written_variance;
    return out;
}

double kolmogorov_critical(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::DomainError, "alpha must lie in (0, 1)");
    auto tail = [](double c) { return 2.0 * (std::exp(-2.0 * c * c) - std::exp(-8.0 * c * c)); };
    // tail() decreases on [0.5, 5]; bisect there.
    double lo = 0.5;
    double hi = 5.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (tail(mid) > alpha ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

TestOutcome ks_exponential(std::span<const double> samples, double rate, double alpha) {
    if (samples.size() < 50) {
        throw Error(ErrorCode::TooFewSamples, fmt::format("KS test needs >= 50 samples, got {}", samples.size()));
    }
    std::vector<double> xs(samples.begin(), samples.end());
    std::sort(xs.begin(), xs.end());
    const double N = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double F = -std::expm1(-rate * std::max(0.0, xs[i]));
        d = std::max({d, (static_cast<double>(i) + 1.0) / N - F, F - static_cast<double>(i) / N});
    }
    TestOutcome out;
    out.statistic = d;
    out.critical = kolmogorov_critical(alpha) / std::sqrt(N);
    out.pass = d < out.critical;
    return out;
}

TestOutcome ks_two_sample(std::span<const double> a, std::span<const double> b, double alpha) {
    if (a.size() < 50 || b.size() < 50) throw Error(ErrorCode::TooFewSamples, "KS test needs >= 50 samples per side");
    std::vector<double> xs(a.begin(), a.end());
    std::vector<double> ys(b.begin(), b.end());
    std::sort(xs.begin(), xs.end());
    std::sort(ys.begin(), ys.end());
    const double n = static_cast<double>(xs.size());
    const double m = static_cast<double>(ys.size());
    std::size_t i = 0;
    std::size_t j = 0;
    double d = 0.0;
    while (i < xs.size() && j < ys.size()) {
        const double v = std::min(xs[i], ys[j]);
        while (i < xs.size() && xs[i] <= v) ++i;
        while (j < ys.size() && ys[j] <= v) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
    }
    TestOutcome out;
    out.statistic = d;
    out.critical = kolmogorov_critical(alpha) * std::sqrt((n + m) / (n * m));
    out.pass = d < out.critical;
    return out;
}

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::DomainError, "normal quantile needs p in (0, 1)");
    double lo = -40.0;
    double hi = 40.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double cdf = 0.5 * std::erfc(-mid / std::numbers::sqrt2);
        (cdf < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

double chi_square_critical(double dof, double alpha) {
    if (!(dof > 0.0)) throw Error(ErrorCode::DomainError, "chi-square critical value needs dof > 0");
    const double z = normal_quantile(1.0 - alpha);
    const double c = 2.0 / (9.0 * dof);
    return dof * std::pow(1.0 - c + z * std::sqrt(c), 3);
}

TestOutcome chi_square_transitions(std::span<const int> chain, const Matrix& P, double alpha) {
    const auto m = static_cast<std::size_t>(P.rows());
    if (chain.size() < 100 * m * m) {
        throw Error(ErrorCode::TooFewSamples,
                    fmt::format("chain of length {} is shorter than 100 m^2 = {}", chain.size(), 100 * m * m));
    }
    std::vector<double> counts(m * m, 0.0);
    for (std::size_t k = 0; k + 1 < chain.size(); ++k) {
        counts[static_cast<std::size_t>(chain[k]) * m + static_cast<std::size_t>(chain[k + 1])] += 1.0;
    }
    TestOutcome out;
    double dof = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        double row_total = 0.0;
        for (std::size_t j = 0; j < m; ++j) row_total += counts[i * m + j];
        if (row_total == 0.0) continue;
        int cells = 0;
        double pooled_obs = 0.0;
        double pooled_exp = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            const double expected = row_total * std::max(0.0, P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
            const double observed = counts[i * m + j];
            if (expected == 0.0) {
                if (observed > 0.0) out.statistic = std::numeric_limits<double>::infinity();
                continue;
            }
            if (expected < 5.0) {
                pooled_obs += observed;
                pooled_exp += expected;
                continue;
            }
            out.statistic += (observed - expected) * (observed - expected) / expected;
            ++cells;
        }
        if (pooled_exp > 0.0) {
            out.statistic += (pooled_obs - pooled_exp) * (pooled_obs - pooled_exp) / pooled_exp;
            ++cells;
        }
        dof += std::max(0, cells - 1);
    }
    out.dof = dof;
    if (dof == 0.0) {
        // Every visited row is deterministic under P: the chain passes iff it never left P's support.
        out.critical = 0.0;
        out.pass = std::isfinite(out.statistic);
        return out;
    }
    out.critical = chi_square_critical(dof, alpha);
    out.pass = out.statistic < out.critical;
    return out;
}

namespace {

struct LineFit {
    double slope;
    double intercept;
    double rss;
};

LineFit least_squares(std::span<const double> x, std::span<const double> y) {
    const double n = static_cast<double>(x.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    LineFit fit{sxy / sxx, 0.0, 0.0};
    fit.intercept = my - fit.slope * mx;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - fit.intercept - fit.slope * x[i];
        fit.rss += r * r;
    }
    return fit;
}

}  // namespace

RateFit fit_rate(std::span<const std::pair<double, double>> points) {
    std::set<double> distinct;
    for (const auto& [n, stat] : points) {
        if (!(n > 1.0) || !(stat > 0.0)) {
            throw Error(ErrorCode::DegenerateInput,
                        fmt::format("rate fit needs n > 1 and statistic > 0 (got n = {}, statistic = {})", n, stat));
        }
        distinct.insert(n);
    }
    if (distinct.size() < 3) throw Error(ErrorCode::DegenerateInput, "rate fit needs at least three distinct n");

    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> y_corrected;
    for (const auto& [n, stat] : points) {
        x.push_back(std::log(n));
        y.push_back(std::log(stat));
        y_corrected.push_back(std::log(stat / std::log(n)));
    }
    const LineFit raw = least_squares(x, y);
    const LineFit corrected = least_squares(x, y_corrected);
    RateFit fit;
    fit.points.assign(points.begin(), points.end());
    fit.slope = raw.slope;
    fit.intercept = raw.intercept;
    fit.rss = raw.rss;
    fit.slope_logcorrected = corrected.slope;
    fit.intercept_logcorrected = corrected.intercept;
    fit.rss_logcorrected = corrected.rss;
    return fit;
}

double mean(std::span<const double> xs) {
    if (xs.empty()) throw Error(ErrorCode::EmptySample, "mean of an empty sample");
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

double standard_error(std::span<const double> xs) {
    if (xs.size() < 2) throw Error(ErrorCode::TooFewSamples, "standard error needs two observations");
    const double mu = mean(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - mu) * (x - mu);
    const double n = static_cast<double>(xs.size());
    return std::sqrt(ss / (n - 1.0) / n);
}

double median(std::vector<double> xs) {
    if (xs.empty()) throw Error(ErrorCode::EmptySample, "median of an empty sample");
    const std::size_t mid = xs.size() / 2;
    std::nth_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(mid), xs.end());
    const double upper = xs[mid];
    if (xs.size() % 2 == 1) return upper;
    const double lower = *std::max_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

}  // namespace mmbm
