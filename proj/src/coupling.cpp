#include "mmbm/coupling.hpp"

#include "mmbm/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

namespace mmbm {

namespace {

/// Running sum with optional Neumaier compensation.
class Accumulator {
public:
    explicit Accumulator(Summation mode) : mode_(mode) {}

    double add(double x) {
        if (mode_ == Summation::Plain) {
            sum_ += x;
            return sum_;
        }
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            carry_ += (sum_ - t) + x;
        } else {
            carry_ += (x - t) + sum_;
        }
        sum_ = t;
        return sum_ + carry_;
    }

private:
    Summation mode_;
    double sum_ = 0.0;
    double carry_ = 0.0;
};

CoarseLevelData coarsen_skeleton(std::span<const double> epochs, std::span<const int> layers,
                                 std::span<const double> r_at_epoch, std::span<const double> interval_min,
                                 std::span<const int> chain, const FlipFlopLevel& level) {
    const int n = level.n;
    CoarseLevelData out;
    out.n = n;
    out.lambda = level.lambda;
    out.phases.push_back(chain[0]);

    double r_start = 0.0;
    double run_min = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < epochs.size(); ++j) {
        run_min = std::min(run_min, interval_min[j]);
        if (layers[j] > n) continue;
        out.theta.push_back(epochs[j]);
        out.layers.push_back(layers[j]);
        out.r_at_epoch.push_back(r_at_epoch[j]);
        out.interval_min.push_back(run_min);
        out.L.push_back(r_start - run_min);
        out.H.push_back(r_at_epoch[j] - run_min);
        out.phases.push_back(chain[j + 1]);
        r_start = r_at_epoch[j];
        run_min = std::numeric_limits<double>::infinity();
    }

    const std::size_t K = out.theta.size();
    out.L_hat.resize(K);
    out.H_hat.resize(K);
    out.chi.resize(K);
    double chi = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        const int i = out.phases[k];
        out.L_hat[k] = level.omega(i) * out.L[k] / level.lambda;
        out.H_hat[k] = level.eta(i) * out.H[k] / level.lambda;
        chi += out.L_hat[k] + out.H_hat[k];
        out.chi[k] = chi;
    }
    return out;
}

}  // namespace

CoupledBundle build_bundle(EpochLedger ledger, PhaseSequence phases, WhIncrements increments, Summation summation) {
    const std::size_t N = ledger.size();
    if (ledger.layers.size() != N || phases.phase_at_epoch.size() != N || increments.L.size() != N ||
        increments.H.size() != N || phases.x0.empty()) {
        throw Error(ErrorCode::LengthMismatch,
                    fmt::format("ledger has {} epochs; phases {}, L {}, H {}", N, phases.phase_at_epoch.size(),
                                increments.L.size(), increments.H.size()));
    }
    CoupledBundle bundle;
    bundle.r_at_epoch.resize(N);
    bundle.interval_min.resize(N);
    Accumulator level(summation);
    double current = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
        bundle.interval_min[j] = current - increments.L[j];
        current = level.add(-increments.L[j] + increments.H[j]);
        bundle.r_at_epoch[j] = current;
    }
    bundle.ledger = std::move(ledger);
    bundle.phases = std::move(phases);
    bundle.increments = std::move(increments);
    return bundle;
}

CoupledBundle simulate_bundle(Stream& rng, const MmbmParams& params, const LevelSchedule& schedule, int n_max,
                              double horizon, Summation summation) {
    const FlipFlopLevel finest = build_level(params, schedule, n_max);
    EpochLedger ledger = sample_ledger(rng, schedule, n_max, horizon);
    const Matrix P0 = uniformized_transition(params.Q, schedule.lambda0());
    PhaseSequence phases = assign_phases(ledger, sample_phase_chain(rng, params, P0, ledger.layer0_count()));
    WhIncrements inc = sample_wh_increments(rng, finest, phases, ledger);
    return build_bundle(std::move(ledger), std::move(phases), std::move(inc), summation);
}

CoarseLevelData coarsen(const CoupledBundle& bundle, const FlipFlopLevel& level) {
    if (level.n > bundle.ledger.n_max) {
        throw Error(ErrorCode::DomainError,
                    fmt::format("cannot coarsen to level {} above the finest level {}", level.n, bundle.ledger.n_max));
    }
    std::vector<int> chain;
    chain.reserve(bundle.size() + 1);
    chain.push_back(bundle.phases.initial());
    chain.insert(chain.end(), bundle.phases.phase_at_epoch.begin(), bundle.phases.phase_at_epoch.end());
    return coarsen_skeleton(bundle.ledger.epochs, bundle.ledger.layers, bundle.r_at_epoch, bundle.interval_min, chain,
                            level);
}

CoarseLevelData coarsen(const CoarseLevelData& data, const FlipFlopLevel& level) {
    if (level.n > data.n) {
        throw Error(ErrorCode::DomainError,
                    fmt::format("cannot coarsen level {} data to the finer level {}", data.n, level.n));
    }
    return coarsen_skeleton(data.theta, data.layers, data.r_at_epoch, data.interval_min, data.phases, level);
}

SfpPath build_sfp_path(const CoarseLevelData& coarse, const FlipFlopLevel& level, Summation summation) {
    if (coarse.n != level.n) {
        throw Error(ErrorCode::DomainError, fmt::format("coarse data is level {}, flip-flop level is {}", coarse.n,
                                                        level.n));
    }
    const std::size_t K = coarse.size();
    SfpPath path;
    path.n = level.n;
    path.lambda = level.lambda;
    path.times.reserve(2 * K + 1);
    path.values.reserve(2 * K + 1);
    path.states.reserve(2 * K);
    path.slopes.reserve(2 * K);
    path.times.push_back(0.0);
    path.values.push_back(0.0);

    Accumulator value(summation);
    double chi_prev = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        const int i = coarse.phases[k];
        path.times.push_back(chi_prev + coarse.L_hat[k]);
        path.values.push_back(value.add(-coarse.L[k]));
        path.states.push_back({false, i});
        path.slopes.push_back(level.slope_down(i));

        path.times.push_back(coarse.chi[k]);
        path.values.push_back(value.add(coarse.H[k]));
        path.states.push_back({true, i});
        path.slopes.push_back(level.slope_up(i));
        chi_prev = coarse.chi[k];
    }
    path.final_phase = coarse.phases.back();
    return path;
}

namespace {

/// Index s of the segment [times[s], times[s+1]) containing t, or
/// states.size() when t is at or beyond the last breakpoint.
std::size_t locate(const SfpPath& path, double t) {
    const auto it = std::upper_bound(path.times.begin(), path.times.end(), t);
    const auto after = static_cast<std::size_t>(it - path.times.begin());
    return after == 0 ? 0 : after - 1;
}

}  // namespace

SfpValue eval_sfp(const SfpPath& path, double t) {
    const std::size_t last = path.times.size() - 1;
    if (t >= path.times[last]) {
        if (t == path.times[last]) return {path.values[last], false};
        const double slope = path.slopes.empty() ? 0.0 : path.slopes.back();
        return {path.values[last] + slope * (t - path.times[last]), true};
    }
    const std::size_t s = locate(path, t);
    const double t0 = path.times[s];
    if (t == t0) return {path.values[s], false};
    const double dt = path.times[s + 1] - t0;
    const double frac = (t - t0) / dt;
    return {path.values[s] + (path.values[s + 1] - path.values[s]) * frac, false};
}

SfpState sfp_state(const SfpPath& path, double t) {
    const std::size_t s = locate(path, t);
    if (s >= path.states.size()) return {false, path.final_phase};
    return path.states[s];
}

double rate_scale(int n) {
    if (n < 1) return std::numeric_limits<double>::quiet_NaN();
    return std::log(static_cast<double>(n)) / std::sqrt(static_cast<double>(n));
}

double delta_scale(int n, double q) {
    if (n < 1) return std::numeric_limits<double>::quiet_NaN();
    const double p = std::floor(std::log(static_cast<double>(n)));
    if (p <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    return 2.0 * p * std::pow(static_cast<double>(n), (q + 0.5) / p - 1.0);
}

DiscrepancyReport discrepancy(const CoupledBundle& bundle, const CoarseLevelData& coarse, const SfpPath& path,
                              double T) {
    DiscrepancyReport rep;
    rep.n = coarse.n;
    rep.eps_n = rate_scale(coarse.n);
    rep.delta_n = delta_scale(coarse.n);

    const double last_fine = bundle.size() == 0 ? 0.0 : bundle.ledger.epochs.back();
    rep.partial = T > last_fine || T > path.times.back();

    std::size_t mismatches = 0;
    for (std::size_t j = 0; j < bundle.size(); ++j) {
        const double theta = bundle.ledger.epochs[j];
        if (theta > T) break;
        ++rep.fine_epochs;
        rep.sup_level_gap = std::max(rep.sup_level_gap, std::abs(bundle.r_at_epoch[j] - eval_sfp(path, theta).value));
        if (sfp_state(path, theta).phase != bundle.phases.phase_at_epoch[j]) ++mismatches;
    }
    rep.phase_mismatch = rep.fine_epochs == 0 ? 0.0 : static_cast<double>(mismatches) / rep.fine_epochs;

    for (std::size_t k = 0; k < coarse.size(); ++k) {
        rep.embed_gap = std::max(rep.embed_gap, std::abs(eval_sfp(path, coarse.chi[k]).value - coarse.r_at_epoch[k]));
        rep.min_embed_gap =
            std::max(rep.min_embed_gap, std::abs(eval_sfp(path, path.times[2 * k + 1]).value - coarse.interval_min[k]));
        if (coarse.theta[k] > T) continue;
        ++rep.cycles;
        const double expected = 2.0 * static_cast<double>(k + 1) / coarse.lambda;
        rep.time_gap_chi = std::max(rep.time_gap_chi, std::abs(coarse.chi[k] - expected));
        rep.time_gap_theta = std::max(rep.time_gap_theta, std::abs(coarse.theta[k] - expected));
        rep.chi_theta_gap = std::max(rep.chi_theta_gap, std::abs(coarse.chi[k] - coarse.theta[k]));
    }
    return rep;
}

}  // namespace mmbm
