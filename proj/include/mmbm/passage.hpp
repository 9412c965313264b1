#pragma once

#include "mmbm/coupling.hpp"
#include "mmbm/model.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace mmbm {

struct RiccatiOptions {
    std::size_t max_iters = 1'000'000;
    double defect_tol = 1e-12;
    /// Iterates are compared for monotonicity every this many steps.
    std::size_t monotone_check_every = 100;
};

struct PsiResult {
    Matrix psi;
    std::size_t iterations = 0;
    double residual = 0.0;
    bool converged = false;
    bool monotone = true;
};

struct PassageSolution {
    int n = 0;
    Matrix psi;
    Matrix u;
    double riccati_residual = 0.0;
    double quadratic_residual = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    bool monotone = true;
};

/// Sup-norm of the Riccati defect
///   D+^{-1} T++ Psi + Psi D-^{-1} T-- + Psi D-^{-1} T-+ Psi + D+^{-1} T+-
/// with D+ = diag(lambda/eta), D- = diag(lambda/omega).
double riccati_residual(const Matrix& psi, const FlipFlopLevel& level, const Matrix& Q);

/// Minimal nonnegative solution of the level's Riccati equation, by monotone
/// fixed-point iteration from Psi = 0. A run that hits max_iters returns the
/// last iterate with `converged == false`.
PsiResult solve_psi(const FlipFlopLevel& level, const Matrix& Q, const RiccatiOptions& options = {});

/// U = lambda D-^{-1} (Psi - I) = diag(omega) (Psi - I).
Matrix compute_u(const Matrix& psi, const FlipFlopLevel& level);

/// Sup-norm of U^2 + 2 diag(mu/sigma^2) U + 2 diag(1/sigma^2) Q.
double quadratic_residual(const Matrix& u, const MmbmParams& params);

PassageSolution solve_passage(const MmbmParams& params, const FlipFlopLevel& level,
                              const RiccatiOptions& options = {});

/// exp(A) by scaling and squaring with a degree-13 Taylor polynomial.
Matrix expm(const Matrix& a);

/// e^{U x}: entry (i, j) is P(tau_x < inf, J(tau_x) = j | J(0) = i).
Matrix passage_matrix(const Matrix& u, double x);

/// Phase at the first passage below -x, tallied over bundles. counts[j] is the
/// number of bundles that crossed in phase j; `never` did not cross before the
/// end of their skeleton.
struct PassageTally {
    std::vector<std::size_t> counts;
    std::size_t never = 0;
    std::size_t total = 0;

    [[nodiscard]] double fraction(std::size_t j) const { return static_cast<double>(counts[j]) / total; }
    [[nodiscard]] double never_fraction() const { return static_cast<double>(never) / total; }
};

/// Index of the first fine interval whose minimum is below -x, or -1.
long first_crossing(const CoupledBundle& bundle, double x);

PassageTally mc_passage(std::span<const CoupledBundle> bundles, double x, int phases);

/// Simulates `count` bundles started in `start_phase` (substreams base_seed, 0..count-1)
/// and tallies them; bundles are generated and discarded one at a time.
PassageTally mc_passage(const MmbmParams& params, const LevelSchedule& schedule, int n_max, double horizon,
                        double x, int start_phase, std::size_t count, std::uint64_t base_seed, int threads = 1);

/// Max pairwise sup-norm distance between the U_n of the given levels.
double level_independence(const MmbmParams& params, const LevelSchedule& schedule, std::span<const int> levels,
                          const RiccatiOptions& options = {});

}  // namespace mmbm
