#include "mmbm/model.hpp"

#include "mmbm/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace mmbm {

RawModel RawModel::from_variances(std::vector<std::string> phases, std::vector<double> p,
                                  std::vector<std::vector<double>> Q, std::vector<double> mu,
                                  const std::vector<double>& sigma2) {
    RawModel raw{std::move(phases), std::move(p), std::move(Q), std::move(mu), {}};
    raw.sigma.reserve(sigma2.size());
    for (double v : sigma2) {
        // A negative variance is reported as a non-positive sigma by validation.
        raw.sigma.push_back(v > 0.0 ? std::sqrt(v) : (v == 0.0 ? 0.0 : -1.0));
    }
    return raw;
}

MmbmParams validate_params(const RawModel& raw) {
    const std::size_t m = raw.p.size();
    if (m == 0) {
        throw Error(ErrorCode::DimensionMismatch, "model has no phases");
    }
    if (raw.mu.size() != m || raw.sigma.size() != m || raw.Q.size() != m) {
        throw Error(ErrorCode::DimensionMismatch,
                    fmt::format("p has {} entries but mu has {}, sigma {}, Q {} rows", m,
                                raw.mu.size(), raw.sigma.size(), raw.Q.size()));
    }
    if (!raw.phases.empty() && raw.phases.size() != m) {
        throw Error(ErrorCode::DimensionMismatch,
                    fmt::format("{} phase labels for {} phases", raw.phases.size(), m));
    }
    for (std::size_t i = 0; i < m; ++i) {
        if (raw.Q[i].size() != m) {
            throw Error(ErrorCode::DimensionMismatch,
                        fmt::format("row {} of Q has {} entries, expected {}", i, raw.Q[i].size(), m));
        }
    }

    MmbmParams params;
    params.p.resize(static_cast<Eigen::Index>(m));
    params.Q.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
    params.mu.resize(static_cast<Eigen::Index>(m));
    params.sigma.resize(static_cast<Eigen::Index>(m));

    for (std::size_t i = 0; i < m; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        double row_sum = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            const double q = raw.Q[i][j];
            if (!std::isfinite(q)) {
                throw Error(ErrorCode::NonGenerator, fmt::format("Q[{}][{}] is not finite", i, j));
            }
            if (i != j && q < 0.0) {
                throw Error(ErrorCode::NonGenerator,
                            fmt::format("negative off-diagonal Q[{}][{}] = {}", i, j, q));
            }
            params.Q(ii, static_cast<Eigen::Index>(j)) = q;
            row_sum += q;
        }
        if (std::abs(row_sum) > kGeneratorTol) {
            throw Error(ErrorCode::NonGenerator, fmt::format("row {} of Q sums to {:g}", i, row_sum));
        }
    }

    double p_sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double pi = raw.p[i];
        if (!(pi >= 0.0) || !std::isfinite(pi)) {
            throw Error(ErrorCode::NonDistribution, fmt::format("p[{}] = {} is not a probability", i, pi));
        }
        params.p(static_cast<Eigen::Index>(i)) = pi;
        p_sum += pi;
    }
    if (std::abs(p_sum - 1.0) > kGeneratorTol) {
        throw Error(ErrorCode::NonDistribution, fmt::format("p sums to {:.17g}", p_sum));
    }

    for (std::size_t i = 0; i < m; ++i) {
        const double s = raw.sigma[i];
        if (!(s > 0.0) || !std::isfinite(s)) {
            throw Error(ErrorCode::NonPositiveSigma, fmt::format("sigma[{}] = {} must be positive", i, s));
        }
        if (!std::isfinite(raw.mu[i])) {
            throw Error(ErrorCode::DimensionMismatch, fmt::format("mu[{}] is not finite", i));
        }
        params.sigma(static_cast<Eigen::Index>(i)) = s;
        params.mu(static_cast<Eigen::Index>(i)) = raw.mu[i];
    }

    if (raw.phases.empty()) {
        for (std::size_t i = 0; i < m; ++i) params.phases.push_back(std::to_string(i + 1));
    } else {
        params.phases = raw.phases;
    }
    return params;
}

double MmbmParams::lambda0() const { return 2.0 * Q.diagonal().cwiseAbs().maxCoeff(); }

Vector MmbmParams::stationary() const {
    const Eigen::Index m = Q.rows();
    Matrix A(m + 1, m);
    A.topRows(m) = Q.transpose();
    A.row(m).setOnes();
    Vector b = Vector::Zero(m + 1);
    b(m) = 1.0;
    Vector pi = A.colPivHouseholderQr().solve(b);
    return pi;
}

double MmbmParams::mean_drift() const { return stationary().dot(mu); }

MmbmParams MmbmParams::started_in(int phase) const {
    MmbmParams copy = *this;
    copy.p.setZero();
    copy.p(phase) = 1.0;
    return copy;
}

LevelSchedule::LevelSchedule(double lambda0, Rule rule, int max_level)
    : lambda0_(lambda0), rule_(std::move(rule)), max_level_(max_level) {}

LevelSchedule LevelSchedule::quadratic(const MmbmParams& params) {
    return LevelSchedule(params.lambda0(), [](int n) { return 2.0 * n * n; }, -1);
}

LevelSchedule LevelSchedule::explicit_values(const MmbmParams& params, std::vector<double> values) {
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] < values[i - 1]) {
            throw Error(ErrorCode::ConfigError, "explicit lambda schedule must be nondecreasing");
        }
    }
    const int max_level = static_cast<int>(values.size());
    return LevelSchedule(
        params.lambda0(), [v = std::move(values)](int n) { return v[static_cast<std::size_t>(n - 1)]; },
        max_level);
}

double LevelSchedule::lambda(int n) const {
    if (n < 0) throw Error(ErrorCode::DomainError, fmt::format("level {} is negative", n));
    if (n == 0) return lambda0_;
    if (max_level_ >= 0 && n > max_level_) {
        throw Error(ErrorCode::DomainError,
                    fmt::format("level {} beyond the explicit schedule (max {})", n, max_level_));
    }
    return std::max(lambda0_, rule_(n));
}

double LevelSchedule::layer_rate(int n) const {
    if (n == 0) return lambda0_ / 2.0;
    return (lambda(n) - lambda(n - 1)) / 2.0;
}

int LevelSchedule::first_unclamped(int n_limit) const {
    for (int n = 1; n <= n_limit; ++n) {
        if (rule_(n) >= lambda0_) return n;
    }
    return n_limit + 1;
}

Matrix uniformized_transition(const Matrix& Q, double lambda) {
    const Eigen::Index m = Q.rows();
    if (lambda <= 0.0) {
        if (Q.cwiseAbs().maxCoeff() != 0.0) {
            throw Error(ErrorCode::LevelTooCoarse, "zero observation rate with a nonzero generator");
        }
        return Matrix::Identity(m, m);
    }
    return Matrix::Identity(m, m) + (2.0 / lambda) * Q;
}

FlipFlopLevel build_level(const MmbmParams& params, int n, double lambda) {
    const double lambda_min = params.lambda0();
    if (!(lambda > 0.0) || lambda < lambda_min) {
        throw Error(ErrorCode::LevelTooCoarse,
                    fmt::format("level {}: lambda = {} but at least max({}, >0) is required", n, lambda,
                                lambda_min));
    }
    const int m = params.size();
    FlipFlopLevel level;
    level.n = n;
    level.lambda = lambda;
    level.omega.resize(m);
    level.eta.resize(m);
    for (int i = 0; i < m; ++i) {
        const double s2 = params.sigma(i) * params.sigma(i);
        const double a = params.mu(i) / s2;
        const double root = std::sqrt(a * a + lambda / s2);
        // The smaller rate loses digits to cancellation; recover it from the
        // product omega * eta = lambda / sigma^2.
        if (a >= 0.0) {
            level.omega(i) = root + a;
            level.eta(i) = (lambda / s2) / level.omega(i);
        } else {
            level.eta(i) = root - a;
            level.omega(i) = (lambda / s2) / level.eta(i);
        }
    }
    level.slope_up = lambda * level.eta.cwiseInverse();
    level.slope_down = -lambda * level.omega.cwiseInverse();
    level.P = uniformized_transition(params.Q, lambda);

    const Matrix I = Matrix::Identity(m, m);
    level.sfp_generator.resize(2 * m, 2 * m);
    level.sfp_generator.topLeftCorner(m, m) = -lambda * I;
    level.sfp_generator.topRightCorner(m, m) = 2.0 * params.Q + lambda * I;
    level.sfp_generator.bottomLeftCorner(m, m) = lambda * I;
    level.sfp_generator.bottomRightCorner(m, m) = -lambda * I;
    return level;
}

FlipFlopLevel build_level(const MmbmParams& params, const LevelSchedule& schedule, int n) {
    return build_level(params, n, schedule.lambda(n));
}

}  // namespace mmbm
