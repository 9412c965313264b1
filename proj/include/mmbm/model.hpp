#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

namespace mmbm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Unvalidated model data as read from a file or assembled by hand.
/// `sigma` holds standard deviations; use `from_variances` when the source
/// lists variances instead.
struct RawModel {
    std::vector<std::string> phases;
    std::vector<double> p;
    std::vector<std::vector<double>> Q;
    std::vector<double> mu;
    std::vector<double> sigma;

    static RawModel from_variances(std::vector<std::string> phases, std::vector<double> p,
                                   std::vector<std::vector<double>> Q, std::vector<double> mu,
                                   const std::vector<double>& sigma2);
};

/// A validated Markov-modulated Brownian motion: phase generator Q, initial
/// law p, and per-phase drift mu and volatility sigma > 0.
struct MmbmParams {
    std::vector<std::string> phases;
    Vector p;
    Matrix Q;
    Vector mu;
    Vector sigma;

    [[nodiscard]] int size() const noexcept { return static_cast<int>(p.size()); }
    /// 2 * max_i |Q_ii|, the smallest admissible observation intensity.
    [[nodiscard]] double lambda0() const;
    /// Stationary law of Q (left null vector normalised to a distribution).
    [[nodiscard]] Vector stationary() const;
    /// sum_i pi_i mu_i under the stationary law.
    [[nodiscard]] double mean_drift() const;
    /// Same model with the initial law concentrated on `phase`.
    [[nodiscard]] MmbmParams started_in(int phase) const;
};

inline constexpr double kGeneratorTol = 1e-12;
inline constexpr double kIdentityTol = 1e-10;

MmbmParams validate_params(const RawModel& raw);

/// Observation intensities lambda_n. lambda_0 is tied to the model; the rule
/// supplies the rest and is clamped from below by lambda_0.
class LevelSchedule {
public:
    using Rule = std::function<double(int)>;

    /// lambda_n = max(lambda_0, 2 n^2).
    static LevelSchedule quadratic(const MmbmParams& params);
    /// lambda_n = max(lambda_0, values[n-1]) for n >= 1; values must be nondecreasing.
    static LevelSchedule explicit_values(const MmbmParams& params, std::vector<double> values);

    [[nodiscard]] double lambda0() const noexcept { return lambda0_; }
    [[nodiscard]] double lambda(int n) const;
    /// Poisson rate of the arrivals first introduced at layer n (n = 0 is M^0).
    [[nodiscard]] double layer_rate(int n) const;
    /// Smallest n whose rule value is at least lambda_0 (where the clamp stops binding).
    [[nodiscard]] int first_unclamped(int n_limit) const;

private:
    LevelSchedule(double lambda0, Rule rule, int max_level);

    double lambda0_;
    Rule rule_;
    int max_level_;  // -1 when unbounded
};

/// Everything the level-n fluid approximation needs.
struct FlipFlopLevel {
    int n = 0;
    double lambda = 0.0;
    Vector omega;       // Wiener-Hopf rate of the drop to the minimum
    Vector eta;         // Wiener-Hopf rate of the rise from the minimum
    Vector slope_up;    // lambda / eta
    Vector slope_down;  // -lambda / omega
    Matrix P;           // I + (lambda/2)^{-1} Q
    Matrix sfp_generator;

    [[nodiscard]] int size() const noexcept { return static_cast<int>(omega.size()); }
};

/// I + (lambda/2)^{-1} Q; lambda = 0 is accepted only for Q = 0 and yields I.
Matrix uniformized_transition(const Matrix& Q, double lambda);

/// Builds level `n` from an explicit intensity; throws LevelTooCoarse when
/// lambda is not positive or lambda < 2 max|Q_ii|.
FlipFlopLevel build_level(const MmbmParams& params, int n, double lambda);
FlipFlopLevel build_level(const MmbmParams& params, const LevelSchedule& schedule, int n);

}  // namespace mmbm
