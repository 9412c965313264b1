#include "mmbm/sampling.hpp"

#include "mmbm/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <numeric>
#include <utility>

namespace mmbm {

std::vector<std::size_t> EpochLedger::level_indices(int n) const {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < layers.size(); ++k) {
        if (layers[k] <= n) out.push_back(k);
    }
    return out;
}

std::vector<double> EpochLedger::level_epochs(int n) const {
    std::vector<double> out;
    for (std::size_t k = 0; k < layers.size(); ++k) {
        if (layers[k] <= n) out.push_back(epochs[k]);
    }
    return out;
}

std::size_t EpochLedger::layer0_count() const {
    return static_cast<std::size_t>(std::count(layers.begin(), layers.end(), 0));
}

EpochLedger sample_ledger(Stream& rng, const LevelSchedule& schedule, int n_max, double horizon) {
    if (n_max < 0) throw Error(ErrorCode::DomainError, "n_max must be nonnegative");
    EpochLedger ledger;
    ledger.horizon = horizon;
    ledger.n_max = n_max;
    if (!(horizon > 0.0)) return ledger;

    std::vector<std::pair<double, int>> arrivals;
    for (int layer = 0; layer <= n_max; ++layer) {
        const double rate = schedule.layer_rate(layer);
        if (!(rate > 0.0)) continue;
        double t = rng.exponential(rate);
        while (t <= horizon) {
            arrivals.emplace_back(t, layer);
            t += rng.exponential(rate);
        }
    }
    // Lexicographic order: ties (measure zero) resolve by layer, ascending.
    std::sort(arrivals.begin(), arrivals.end());
    ledger.epochs.reserve(arrivals.size());
    ledger.layers.reserve(arrivals.size());
    for (const auto& [t, layer] : arrivals) {
        ledger.epochs.push_back(t);
        ledger.layers.push_back(layer);
    }
    return ledger;
}

std::vector<int> sample_phase_chain(Stream& rng, const MmbmParams& params, const Matrix& P0, std::size_t k_steps) {
    const int m = params.size();
    if (P0.rows() != m || P0.cols() != m) {
        throw Error(ErrorCode::DimensionMismatch, "transition matrix does not match the model");
    }
    std::discrete_distribution<int> initial(params.p.data(), params.p.data() + m);
    std::vector<std::discrete_distribution<int>> rows;
    rows.reserve(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        std::vector<double> w(static_cast<std::size_t>(m));
        for (int j = 0; j < m; ++j) w[static_cast<std::size_t>(j)] = std::max(0.0, P0(i, j));
        rows.emplace_back(w.begin(), w.end());
    }

    std::vector<int> chain;
    chain.reserve(k_steps + 1);
    chain.push_back(initial(rng.engine()));
    for (std::size_t k = 0; k < k_steps; ++k) {
        chain.push_back(rows[static_cast<std::size_t>(chain.back())](rng.engine()));
    }
    return chain;
}

std::vector<int> sample_phase_chain(Stream& rng, const MmbmParams& params, const FlipFlopLevel& level0,
                                    std::size_t k_steps) {
    return sample_phase_chain(rng, params, level0.P, k_steps);
}

PhaseSequence assign_phases(const EpochLedger& ledger, std::vector<int> x0) {
    const std::size_t needed = 1 + ledger.layer0_count();
    if (x0.size() < needed) {
        throw Error(ErrorCode::InsufficientChain,
                    fmt::format("{} chain states for {} layer-0 arrivals", x0.size(), needed - 1));
    }
    PhaseSequence out;
    out.phase_at_epoch.reserve(ledger.size());
    std::size_t jumps = 0;
    for (int layer : ledger.layers) {
        if (layer == 0) ++jumps;
        out.phase_at_epoch.push_back(x0[jumps]);
    }
    out.x0 = std::move(x0);
    return out;
}

int phase_at(const EpochLedger& ledger, const PhaseSequence& phases, double t) {
    std::size_t jumps = 0;
    for (std::size_t k = 0; k < ledger.size() && ledger.epochs[k] <= t; ++k) {
        if (ledger.layers[k] == 0) ++jumps;
    }
    return phases.x0.at(jumps);
}

WhIncrements sample_wh_increments(Stream& rng, const FlipFlopLevel& level, const PhaseSequence& phases,
                                  const EpochLedger& ledger) {
    if (phases.phase_at_epoch.size() != ledger.size()) {
        throw Error(ErrorCode::LengthMismatch, "phase sequence does not match the ledger");
    }
    WhIncrements inc;
    inc.L.reserve(ledger.size());
    inc.H.reserve(ledger.size());
    for (std::size_t j = 0; j < ledger.size(); ++j) {
        const int i = phases.interval_phase(j);
        inc.L.push_back(rng.exponential(level.omega(i)));
        inc.H.push_back(rng.exponential(level.eta(i)));
    }
    return inc;
}

}  // namespace mmbm
