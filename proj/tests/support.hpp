#pragma once

#include "mmbm/model.hpp"
#include "mmbm/rng.hpp"

#include <string>
#include <vector>

namespace mmbm::testing {

inline MmbmParams make_model(std::vector<std::vector<double>> Q, std::vector<double> p, std::vector<double> mu,
                             std::vector<double> sigma2) {
    return validate_params(RawModel::from_variances({}, std::move(p), std::move(Q), std::move(mu), sigma2));
}

inline MmbmParams standard_bm() { return make_model({{0.0}}, {1.0}, {0.0}, {1.0}); }

inline MmbmParams scalar_bm(double mu, double sigma2) { return make_model({{0.0}}, {1.0}, {mu}, {sigma2}); }

/// Two phases, mu = (5, -2), sigma^2 = (4, 1), symmetric unit switching.
inline MmbmParams fig3_model() { return make_model({{-1.0, 1.0}, {1.0, -1.0}}, {0.5, 0.5}, {5.0, -2.0}, {4.0, 1.0}); }

/// Random valid model with `m` phases: off-diagonal rates in [0, max_rate),
/// drifts in [-2, 2), variances in [0.25, 4).
inline MmbmParams random_model(Stream& rng, int m, double max_rate = 2.0) {
    RawModel raw;
    raw.Q.assign(static_cast<std::size_t>(m), std::vector<double>(static_cast<std::size_t>(m), 0.0));
    std::vector<double> sigma2;
    double total = 0.0;
    for (int i = 0; i < m; ++i) {
        auto& row = raw.Q[static_cast<std::size_t>(i)];
        double sum = 0.0;
        for (int j = 0; j < m; ++j) {
            if (i == j) continue;
            row[static_cast<std::size_t>(j)] = max_rate * rng.uniform();
            sum += row[static_cast<std::size_t>(j)];
        }
        row[static_cast<std::size_t>(i)] = -sum;
        raw.p.push_back(rng.uniform() + 0.05);
        total += raw.p.back();
        raw.mu.push_back(4.0 * rng.uniform() - 2.0);
        sigma2.push_back(0.25 + 3.75 * rng.uniform());
    }
    for (double& v : raw.p) v /= total;
    // Re-normalise exactly: the last entry absorbs rounding.
    double head = 0.0;
    for (int i = 0; i + 1 < m; ++i) head += raw.p[static_cast<std::size_t>(i)];
    raw.p.back() = 1.0 - head;
    return validate_params(RawModel::from_variances({}, raw.p, raw.Q, raw.mu, sigma2));
}

}  // namespace mmbm::testing
