#pragma once

#include "mmbm/model.hpp"
#include "mmbm/rng.hpp"

#include <cstddef>
#include <vector>

namespace mmbm {

/// Merged arrival epochs of the nested observation processes on (0, horizon].
/// Layer 0 is M^0 (rate lambda_0/2); layer l >= 1 holds the arrivals added at
/// level l (rate (lambda_l - lambda_{l-1})/2). The level-n epochs are exactly
/// the entries whose layer is <= n.
struct EpochLedger {
    double horizon = 0.0;
    int n_max = 0;
    std::vector<double> epochs;
    std::vector<int> layers;

    [[nodiscard]] std::size_t size() const noexcept { return epochs.size(); }
    /// Positions (into `epochs`) of the level-n epochs, in time order.
    [[nodiscard]] std::vector<std::size_t> level_indices(int n) const;
    [[nodiscard]] std::vector<double> level_epochs(int n) const;
    [[nodiscard]] std::size_t layer0_count() const;
};

/// Uniformized phase chain X^0 and the phase J(theta) carried by every epoch.
struct PhaseSequence {
    std::vector<int> x0;
    std::vector<int> phase_at_epoch;

    [[nodiscard]] int initial() const { return x0.front(); }
    /// Phase on fine interval j = [theta_j, theta_{j+1}), theta_0 = 0.
    [[nodiscard]] int interval_phase(std::size_t j) const {
        return j == 0 ? x0.front() : phase_at_epoch[j - 1];
    }
};

/// Drop-to-minimum L and rise-from-minimum H on every fine interval.
struct WhIncrements {
    std::vector<double> L;
    std::vector<double> H;
};

EpochLedger sample_ledger(Stream& rng, const LevelSchedule& schedule, int n_max, double horizon);

std::vector<int> sample_phase_chain(Stream& rng, const MmbmParams& params, const Matrix& P0, std::size_t k_steps);
std::vector<int> sample_phase_chain(Stream& rng, const MmbmParams& params, const FlipFlopLevel& level0,
                                    std::size_t k_steps);

PhaseSequence assign_phases(const EpochLedger& ledger, std::vector<int> x0);

/// J(t) reconstructed from the ledger: x0[#layer-0 arrivals <= t].
int phase_at(const EpochLedger& ledger, const PhaseSequence& phases, double t);

WhIncrements sample_wh_increments(Stream& rng, const FlipFlopLevel& level, const PhaseSequence& phases,
                                  const EpochLedger& ledger);

}  // namespace mmbm
