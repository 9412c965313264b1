#include "mmbm/passage.hpp"

#include "mmbm/error.hpp"
#include "mmbm/parallel.hpp"
#include "mmbm/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace mmbm {

namespace {

Matrix riccati_constant(const FlipFlopLevel& level, const Matrix& Q) {
    const Eigen::Index m = Q.rows();
    const Matrix T_plus_minus = 2.0 * Q + level.lambda * Matrix::Identity(m, m);
    return (level.eta / level.lambda).asDiagonal() * T_plus_minus;
}

}  // namespace

double riccati_residual(const Matrix& psi, const FlipFlopLevel& level, const Matrix& Q) {
    const Eigen::Index m = Q.rows();
    const Matrix I = Matrix::Identity(m, m);
    const double lam = level.lambda;
    const Vector inv_up = level.slope_up.cwiseInverse();
    const Vector inv_down = level.slope_down.cwiseAbs().cwiseInverse();
    const Matrix T_pp = -lam * I;
    const Matrix T_pm = 2.0 * Q + lam * I;
    const Matrix T_mp = lam * I;
    const Matrix T_mm = -lam * I;
    const Matrix defect = inv_up.asDiagonal() * T_pp * psi + psi * inv_down.asDiagonal() * T_mm +
                          psi * inv_down.asDiagonal() * T_mp * psi + inv_up.asDiagonal() * T_pm;
    return defect.cwiseAbs().maxCoeff();
}

PsiResult solve_psi(const FlipFlopLevel& level, const Matrix& Q, const RiccatiOptions& options) {
    const Eigen::Index m = Q.rows();
    if (level.size() != m) throw Error(ErrorCode::DimensionMismatch, "level and generator sizes differ");

    // Psi_{k+1}[i,j] = (C + Psi_k diag(omega) Psi_k)[i,j] / (eta_i + omega_j).
    // The numerator minus (eta_i + omega_j) Psi_k[i,j] is the Riccati defect
    // at Psi_k, so the defect comes for free with each step.
    const Matrix C = riccati_constant(level, Q);
    Matrix denom(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) denom(i, j) = level.eta(i) + level.omega(j);
    }

    PsiResult result;
    Matrix psi = Matrix::Zero(m, m);
    Matrix next(m, m);
    Matrix scaled(m, m);
    Matrix snapshot = psi;
    // Once the defect is below defect_tol the run counts as converged. It then
    // keeps iterating until the step reaches its rounding floor (no new
    // smallest step for kStallLimit iterations), for at most as many extra
    // iterations as convergence took.
    constexpr int kStallLimit = 20;
    std::size_t converged_at = 0;
    double best_step = std::numeric_limits<double>::infinity();
    int stall = 0;
    for (std::size_t it = 1; it <= options.max_iters; ++it) {
        scaled.noalias() = psi * level.omega.asDiagonal();
        next = C;
        next.noalias() += scaled * psi;
        next.array() /= denom.array();
        const double step = (next - psi).cwiseAbs().maxCoeff();
        const double defect = ((next - psi).array() * denom.array()).abs().maxCoeff();
        psi.swap(next);
        result.iterations = it;
        if (options.monotone_check_every > 0 && it % options.monotone_check_every == 0) {
            if ((psi - snapshot).minCoeff() < -1e-14 || psi.maxCoeff() > 1.0 + 1e-12) result.monotone = false;
            snapshot = psi;
        }
        if (step == 0.0) {
            if (converged_at == 0 && defect < options.defect_tol) converged_at = it;
            break;
        }
        if (converged_at == 0) {
            if (defect < options.defect_tol) converged_at = it;
            best_step = step;
            continue;
        }
        if (step < best_step) {
            best_step = step;
            stall = 0;
        } else if (++stall >= kStallLimit) {
            break;
        }
        if (it >= 2 * converged_at) break;
    }
    result.converged = converged_at > 0;
    result.residual = riccati_residual(psi, level, Q);
    result.psi = std::move(psi);
    return result;
}

Matrix compute_u(const Matrix& psi, const FlipFlopLevel& level) {
    const Eigen::Index m = psi.rows();
    return level.omega.asDiagonal() * (psi - Matrix::Identity(m, m));
}

double quadratic_residual(const Matrix& u, const MmbmParams& params) {
    if (u.rows() != params.size() || u.cols() != params.size()) {
        throw Error(ErrorCode::DimensionMismatch, "U does not match the model");
    }
    const Vector inv_var = params.sigma.array().square().inverse();
    const Vector drift = (params.mu.array() * inv_var.array()).matrix();
    const Matrix defect = u * u + 2.0 * drift.asDiagonal() * u + 2.0 * inv_var.asDiagonal() * params.Q;
    return defect.cwiseAbs().maxCoeff();
}

PassageSolution solve_passage(const MmbmParams& params, const FlipFlopLevel& level, const RiccatiOptions& options) {
    PsiResult psi = solve_psi(level, params.Q, options);
    PassageSolution sol;
    sol.n = level.n;
    sol.u = compute_u(psi.psi, level);
    sol.quadratic_residual = quadratic_residual(sol.u, params);
    sol.riccati_residual = psi.residual;
    sol.iterations = psi.iterations;
    sol.converged = psi.converged;
    sol.monotone = psi.monotone;
    sol.psi = std::move(psi.psi);
    return sol;
}

Matrix expm(const Matrix& a) {
    const Eigen::Index m = a.rows();
    const Matrix I = Matrix::Identity(m, m);
    if (m == 0) return a;
    const double norm = a.cwiseAbs().colwise().sum().maxCoeff();
    int squarings = 0;
    if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
    const Matrix scaled = a / std::ldexp(1.0, squarings);

    // Horner evaluation of sum_{k=0}^{13} scaled^k / k!.
    constexpr int kOrder = 13;
    Matrix result = I;
    for (int k = kOrder; k >= 1; --k) {
        result = I + (scaled * result) / static_cast<double>(k);
    }
    for (int s = 0; s < squarings; ++s) result = result * result;
    return result;
}

Matrix passage_matrix(const Matrix& u, double x) {
    if (!(x >= 0.0)) throw Error(ErrorCode::DomainError, fmt::format("passage level x = {} must be >= 0", x));
    return expm(u * x);
}

long first_crossing(const CoupledBundle& bundle, double x) {
    for (std::size_t j = 0; j < bundle.interval_min.size(); ++j) {
        if (bundle.interval_min[j] < -x) return static_cast<long>(j);
    }
    return -1;
}

PassageTally mc_passage(std::span<const CoupledBundle> bundles, double x, int phases) {
    if (bundles.empty()) throw Error(ErrorCode::EmptySample, "no bundles to tally");
    PassageTally tally;
    tally.counts.assign(static_cast<std::size_t>(phases), 0);
    for (const auto& bundle : bundles) {
        const long j = first_crossing(bundle, x);
        if (j < 0) {
            ++tally.never;
        } else {
            ++tally.counts[static_cast<std::size_t>(bundle.phases.interval_phase(static_cast<std::size_t>(j)))];
        }
        ++tally.total;
    }
    return tally;
}

PassageTally mc_passage(const MmbmParams& params, const LevelSchedule& schedule, int n_max, double horizon,
                        double x, int start_phase, std::size_t count, std::uint64_t base_seed, int threads) {
    if (count == 0) throw Error(ErrorCode::EmptySample, "no bundles requested");
    const MmbmParams started = params.started_in(start_phase);
    std::vector<int> outcome(count, -1);
    parallel_for(count, threads, [&](std::size_t r) {
        Stream rng = Stream::substream(base_seed, r);
        const CoupledBundle bundle = simulate_bundle(rng, started, schedule, n_max, horizon);
        const long j = first_crossing(bundle, x);
        outcome[r] = j < 0 ? -1 : bundle.phases.interval_phase(static_cast<std::size_t>(j));
    });
    PassageTally tally;
    tally.counts.assign(static_cast<std::size_t>(params.size()), 0);
    for (int o : outcome) {
        if (o < 0) {
            ++tally.never;
        } else {
            ++tally.counts[static_cast<std::size_t>(o)];
        }
        ++tally.total;
    }
    return tally;
}

double level_independence(const MmbmParams& params, const LevelSchedule& schedule, std::span<const int> levels,
                          const RiccatiOptions& options) {
    if (levels.size() < 2) throw Error(ErrorCode::DegenerateInput, "level independence needs at least two levels");
    std::vector<Matrix> us;
    for (int n : levels) {
        const PassageSolution sol = solve_passage(params, build_level(params, schedule, n), options);
        if (!sol.converged) {
            throw Error(ErrorCode::NoConvergence,
                        fmt::format("Riccati iteration at level {} stopped after {} iterations (defect {:.3g})", n,
                                    sol.iterations, sol.riccati_residual));
        }
        us.push_back(sol.u);
    }
    double worst = 0.0;
    for (std::size_t a = 0; a < us.size(); ++a) {
        for (std::size_t b = a + 1; b < us.size(); ++b) {
            worst = std::max(worst, (us[a] - us[b]).cwiseAbs().maxCoeff());
        }
    }
    return worst;
}

}  // namespace mmbm
