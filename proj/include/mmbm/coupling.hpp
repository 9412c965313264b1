#pragma once

#include "mmbm/model.hpp"
#include "mmbm/rng.hpp"
#include "mmbm/sampling.hpp"

#include <cstddef>
#include <vector>

namespace mmbm {

enum class Summation { Plain, Compensated };

/// The MMBM skeleton at the finest level: epochs, phases, increments, the
/// level R(theta_k) at every epoch and the minimum of R over every fine
/// interval. Vectors indexed by epoch hold one entry per epoch theta_1..theta_K;
/// vectors indexed by interval hold one entry per [theta_{j}, theta_{j+1}],
/// theta_0 = 0.
struct CoupledBundle {
    EpochLedger ledger;
    PhaseSequence phases;
    WhIncrements increments;
    std::vector<double> r_at_epoch;
    std::vector<double> interval_min;

    [[nodiscard]] std::size_t size() const noexcept { return r_at_epoch.size(); }
};

/// Level-n data recovered from a finer skeleton. Epoch vectors (theta, layers,
/// r_at_epoch, chi) have K entries for theta_1..theta_K; interval vectors
/// (interval_min, L, H, L_hat, H_hat) have K entries; phases holds
/// X^n(0..K), so K + 1 entries.
struct CoarseLevelData {
    int n = 0;
    double lambda = 0.0;
    std::vector<double> theta;
    std::vector<int> layers;
    std::vector<double> r_at_epoch;
    std::vector<double> interval_min;
    std::vector<int> phases;
    std::vector<double> L;
    std::vector<double> H;
    std::vector<double> L_hat;
    std::vector<double> H_hat;
    std::vector<double> chi;

    [[nodiscard]] std::size_t size() const noexcept { return theta.size(); }
};

struct SfpState {
    bool up = false;
    int phase = 0;

    friend bool operator==(const SfpState&, const SfpState&) = default;
};

/// Piecewise-linear level-n fluid path. Breakpoint 2k is chi_k, breakpoint
/// 2k+1 is chi_k + L_hat_{k+1}; segment s runs from breakpoint s to s+1.
struct SfpPath {
    int n = 0;
    double lambda = 0.0;
    std::vector<double> times;
    std::vector<double> values;
    std::vector<SfpState> states;
    std::vector<double> slopes;
    int final_phase = 0;

    [[nodiscard]] std::size_t cycles() const noexcept { return states.size() / 2; }
    [[nodiscard]] double chi(std::size_t k) const { return times[2 * k]; }
};

struct SfpValue {
    double value = 0.0;
    bool extrapolated = false;
};

struct DiscrepancyReport {
    int n = 0;
    double sup_level_gap = 0.0;
    double embed_gap = 0.0;
    double min_embed_gap = 0.0;
    double time_gap_chi = 0.0;
    double time_gap_theta = 0.0;
    double chi_theta_gap = 0.0;
    double phase_mismatch = 0.0;
    std::size_t fine_epochs = 0;
    std::size_t cycles = 0;
    bool partial = false;
    double eps_n = 0.0;
    double delta_n = 0.0;
};

CoupledBundle build_bundle(EpochLedger ledger, PhaseSequence phases, WhIncrements increments,
                           Summation summation = Summation::Plain);

/// Samples ledger, phase chain and increments for one replication at level n_max.
CoupledBundle simulate_bundle(Stream& rng, const MmbmParams& params, const LevelSchedule& schedule, int n_max,
                              double horizon, Summation summation = Summation::Plain);

CoarseLevelData coarsen(const CoupledBundle& bundle, const FlipFlopLevel& level);
/// Re-coarsens already coarse data; level.n must not exceed data.n.
CoarseLevelData coarsen(const CoarseLevelData& data, const FlipFlopLevel& level);

SfpPath build_sfp_path(const CoarseLevelData& coarse, const FlipFlopLevel& level,
                       Summation summation = Summation::Plain);

SfpValue eval_sfp(const SfpPath& path, double t);
/// J^n(t); the phase after the last cycle is `final_phase`.
SfpState sfp_state(const SfpPath& path, double t);

DiscrepancyReport discrepancy(const CoupledBundle& bundle, const CoarseLevelData& coarse, const SfpPath& path,
                              double T);

/// n^{-1/2} log n.
double rate_scale(int n);
/// 2 p_n n^{(q+1/2)/p_n - 1} with p_n = floor(log n); NaN when p_n = 0.
double delta_scale(int n, double q = 2.0);

}  // namespace mmbm
