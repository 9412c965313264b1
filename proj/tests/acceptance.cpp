// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include "cli.hpp"
#include "mmbm/coupling.hpp"
#include "mmbm/parallel.hpp"
#include "mmbm/passage.hpp"
#include "mmbm/stats.hpp"
#include "support.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

using namespace mmbm;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

cli::ExperimentConfig rate_experiment() {
    cli::ExperimentConfig cfg;
    cfg.model = mmbm::testing::standard_bm();
    cfg.levels = {4, 8, 16, 32};
    cfg.n_max = 64;
    cfg.horizon = 0.5;
    cfg.replications = 200;
    cfg.base_seed = 2024;
    cfg.threads = 1;
    return cfg;
}

// 1. Exact embedding on random models.
Outcome embedding() {
    const auto start = Clock::now();
    Stream model_rng(1001);
    double worst_value = 0.0;
    double worst_min = 0.0;
    std::size_t cycles = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const MmbmParams model = mmbm::testing::random_model(model_rng, 1 + trial % 5);
        const LevelSchedule schedule = LevelSchedule::quadratic(model);
        Stream rng = Stream::substream(1001, static_cast<std::uint64_t>(trial));
        const CoupledBundle bundle = simulate_bundle(rng, model, schedule, 8, 5.0);
        for (int n : {2, 4, 8}) {
            const FlipFlopLevel level = build_level(model, schedule, n);
            const CoarseLevelData coarse = coarsen(bundle, level);
            const SfpPath path = build_sfp_path(coarse, level);
            for (std::size_t k = 0; k < coarse.size(); ++k) {
                worst_value = std::max(worst_value, std::abs(eval_sfp(path, coarse.chi[k]).value - coarse.r_at_epoch[k]));
                worst_min = std::max(worst_min,
                                     std::abs(eval_sfp(path, path.times[2 * k + 1]).value - coarse.interval_min[k]));
            }
            cycles += coarse.size();
        }
    }
    const double elapsed = seconds_since(start);
    return {worst_value <= 1e-9 && worst_min <= 1e-9 && elapsed < 60.0,
            fmt::format("max |R^n(chi_k) - R(theta_k)| = {:.2e}, max minimum gap = {:.2e} over {} cycles, {:.1f} s",
                        worst_value, worst_min, cycles, elapsed)};
}

struct RateRun {
    cli::RateOutcome outcome;
    double seconds = 0.0;
};

// 2. Rate reproduction.
Outcome rate(const RateRun& run) {
    const auto& levels = run.outcome.levels;
    bool decreasing = levels.size() == 4;
    std::string medians;
    for (std::size_t i = 0; i < levels.size(); ++i) {
        medians += fmt::format("{}{}:{:.4f}", i ? ", " : "", levels[i].n, levels[i].median_sup_gap);
        if (i > 0 && !(levels[i].median_sup_gap < levels[i - 1].median_sup_gap)) decreasing = false;
    }
    if (!run.outcome.fit) return {false, "no fit: " + run.outcome.fit_note};
    const double slope = run.outcome.fit->slope;
    const bool in_band = slope >= -0.7 && slope <= -0.3;
    return {in_band && decreasing && run.seconds < 300.0,
            fmt::format("slope {:.4f} (band [-0.7, -0.3]), log-corrected {:.4f}, medians strictly decreasing: {}, "
                        "medians [{}], {:.1f} s",
                        slope, run.outcome.fit->slope_logcorrected, decreasing ? "yes" : "no", medians, run.seconds)};
}

double mean_mismatch(const cli::RateOutcome& outcome, int n) {
    std::vector<double> xs;
    for (const auto& row : outcome.rows) {
        if (row.report.n == n) xs.push_back(row.report.phase_mismatch);
    }
    return mean(xs);
}

// 3. Phase convergence: the single-phase experiment plus the two-phase example,
// where the mismatch is not identically zero.
Outcome phase_convergence(const RateRun& bm) {
    cli::ExperimentConfig cfg = rate_experiment();
    cfg.model = mmbm::testing::fig3_model();
    const cli::RateOutcome two = cli::run_rate(cfg);
    const double bm4 = mean_mismatch(bm.outcome, 4);
    const double bm32 = mean_mismatch(bm.outcome, 32);
    const double f4 = mean_mismatch(two, 4);
    const double f32 = mean_mismatch(two, 32);
    const bool pass = bm32 <= 0.5 * bm4 && f32 <= 0.5 * f4 && f4 > 0.0;
    return {pass, fmt::format("mean mismatch n=4 -> n=32: single phase {:.4f} -> {:.4f}; two-phase {:.4f} -> {:.4f}",
                              bm4, bm32, f4, f32)};
}

// 4. Scalar passage oracle.
Outcome scalar_passage() {
    const auto start = Clock::now();
    double worst_up = 0.0;
    double worst_down = 0.0;
    double worst_exp = 0.0;
    for (int n : {2, 8, 32}) {
        const MmbmParams up = mmbm::testing::scalar_bm(1.0, 1.0);
        const MmbmParams down = mmbm::testing::scalar_bm(-1.0, 1.0);
        const PassageSolution a = solve_passage(up, build_level(up, LevelSchedule::quadratic(up), n));
        const PassageSolution b = solve_passage(down, build_level(down, LevelSchedule::quadratic(down), n));
        worst_up = std::max(worst_up, std::abs(a.u(0, 0) + 2.0));
        worst_down = std::max(worst_down, std::abs(b.u(0, 0)));
        worst_exp = std::max(worst_exp, std::abs(passage_matrix(a.u, 1.0)(0, 0) - std::exp(-2.0)));
    }
    const double elapsed = seconds_since(start);
    return {worst_up <= 1e-10 && worst_down <= 1e-10 && worst_exp <= 1e-10 && elapsed < 1.0,
            fmt::format("|U+2| = {:.2e}, |U| (mu=-1) = {:.2e}, |e^U - e^-2| = {:.2e}, levels {{2,8,32}}, {:.3f} s",
                        worst_up, worst_down, worst_exp, elapsed)};
}

// 5. Quadratic equation and level independence on random models.
Outcome level_consistency() {
    const auto start = Clock::now();
    Stream model_rng(5005);
    const std::vector<int> levels{4, 16, 64};
    double worst_residual = 0.0;
    double worst_distance = 0.0;
    int failures = 0;
    std::string first_failure;
    for (int trial = 0; trial < 50; ++trial) {
        const MmbmParams model = mmbm::testing::random_model(model_rng, 1 + trial % 5);
        const LevelSchedule schedule = LevelSchedule::quadratic(model);
        std::vector<Matrix> us;
        bool ok = true;
        for (int n : levels) {
            const PassageSolution sol = solve_passage(model, build_level(model, schedule, n));
            worst_residual = std::max(worst_residual, sol.quadratic_residual);
            if (!sol.converged || sol.quadratic_residual > 1e-8) ok = false;
            us.push_back(sol.u);
        }
        double distance = 0.0;
        for (std::size_t a = 0; a < us.size(); ++a) {
            for (std::size_t b = a + 1; b < us.size(); ++b) {
                distance = std::max(distance, (us[a] - us[b]).cwiseAbs().maxCoeff());
            }
        }
        worst_distance = std::max(worst_distance, distance);
        if (distance > 1e-8) ok = false;
        if (!ok) {
            ++failures;
            if (first_failure.empty()) {
                first_failure = fmt::format("; first failing model #{} (m = {}, mean drift {:.3g})", trial,
                                            model.size(), model.mean_drift());
            }
        }
    }
    const double elapsed = seconds_since(start);
    return {failures == 0 && elapsed < 30.0,
            fmt::format("max quadratic residual {:.2e}, max level distance {:.2e}, {} of 50 models failing{}, {:.1f} s",
                        worst_residual, worst_distance, failures, first_failure, elapsed)};
}

// 6. Monte Carlo passage against e^{Ux}.
Outcome monte_carlo_passage() {
    const auto start = Clock::now();
    const MmbmParams model =
        mmbm::testing::make_model({{-2.0, 2.0}, {1.0, -1.0}}, {1.0, 0.0}, {1.0, -1.5}, {1.0, 0.5});
    const LevelSchedule schedule = LevelSchedule::quadratic(model);
    const PassageSolution sol = solve_passage(model, build_level(model, schedule, 16));
    const Matrix e = passage_matrix(sol.u, 1.0);
    const std::size_t bundles = 10000;
    const double N = static_cast<double>(bundles);
    double worst_z = 0.0;
    bool pass = model.mean_drift() < 0.0;
    std::string rows;
    for (int start_phase = 0; start_phase < 2; ++start_phase) {
        const PassageTally tally =
            mc_passage(model, schedule, 2, 200.0, 1.0, start_phase, bundles, 6006 + static_cast<std::uint64_t>(start_phase), 4);
        double row_sum = 0.0;
        auto compare = [&](double empirical, double theory) {
            const double p = std::clamp(theory, 0.0, 1.0);
            const double se = std::sqrt(p * (1.0 - p) / N);
            const double gap = std::abs(empirical - p);
            if (gap > 3.0 * se) pass = false;
            if (se > 0.0) worst_z = std::max(worst_z, gap / se);
        };
        for (int j = 0; j < 2; ++j) {
            compare(tally.fraction(static_cast<std::size_t>(j)), e(start_phase, j));
            row_sum += e(start_phase, j);
        }
        compare(tally.never_fraction(), 1.0 - row_sum);
        rows += fmt::format("{}start {}: empirical ({:.4f}, {:.4f}, never {:.4f}) vs ({:.4f}, {:.4f})", start_phase ? "; " : "",
                            start_phase, tally.fraction(0), tally.fraction(1), tally.never_fraction(), e(start_phase, 0),
                            e(start_phase, 1));
    }
    const double elapsed = seconds_since(start);
    return {pass && elapsed < 120.0,
            fmt::format("mean drift {:.3f}; {}; max |gap|/SE = {:.2f}; {:.1f} s", model.mean_drift(), rows, worst_z,
                        elapsed)};
}

/// Fraction of replications whose skeleton leaves [-a, a] before time t.
double empirical_sup_tail(const MmbmParams& model, double t, double a, std::size_t reps, std::uint64_t seed) {
    const LevelSchedule schedule = LevelSchedule::quadratic(model);
    const int n_max = 16;
    std::vector<char> hit(reps, 0);
    parallel_for(reps, 4, [&](std::size_t r) {
        Stream rng = Stream::substream(seed, r);
        const CoupledBundle bundle = simulate_bundle(rng, model, schedule, n_max, t);
        for (std::size_t k = 0; k < bundle.size(); ++k) {
            if (std::abs(bundle.r_at_epoch[k]) > a || bundle.interval_min[k] < -a) {
                hit[r] = 1;
                break;
            }
        }
    });
    return static_cast<double>(std::count(hit.begin(), hit.end(), 1)) / static_cast<double>(reps);
}

// 7. Appendix oracles.
Outcome appendix() {
    bool moments = erlang_central_moment(4, 1.0, 2) == 4.0 && erlang_central_moment(4, 1.0, 3) == 8.0;
    for (int a = 2; a <= 20; ++a) {
        for (int k = 1; k <= 10; ++k) {
            if (!(erlang_central_moment(a, 1.0, k) <= erlang_moment_bound(a, 1.0, k))) moments = false;
        }
    }
    struct Case {
        std::string name;
        MmbmParams model;
        double a;
        bool variance_form;
    };
    const std::vector<Case> battery{
        {"BM a=1.5", mmbm::testing::standard_bm(), 1.5, false},
        {"BM a=2", mmbm::testing::standard_bm(), 2.0, false},
        {"BM a=3", mmbm::testing::standard_bm(), 3.0, false},
        {"mu=0.5 sigma=0.8 a=2", mmbm::testing::scalar_bm(0.5, 0.64), 2.0, false},
        {"two-phase sigma^2=(1,0.5) a=2.5",
         mmbm::testing::make_model({{-1, 1}, {2, -2}}, {0.5, 0.5}, {1.0, -1.0}, {1.0, 0.5}), 2.5, false},
        {"two-phase example (sigma_max=2, variance form) a=8", mmbm::testing::fig3_model(), 8.0, true},
    };
    bool dominated = true;
    std::string detail;
    std::uint64_t seed = 7007;
    for (const Case& c : battery) {
        const double empirical = empirical_sup_tail(c.model, 1.0, c.a, 100000, seed++);
        const SupBound bound = mmbm_sup_bound(c.model, 1.0, c.a);
        const double b = c.variance_form ? bound.conservative_variance : bound.conservative;
        if (!(empirical <= b)) dominated = false;
        detail += fmt::format("; {}: {:.2e} <= {:.2e}", c.name, empirical, b);
    }
    return {moments && dominated, fmt::format("moment bound holds on a=2..20, k=1..10: {}{}", moments ? "yes" : "no", detail)};
}

// 8. Distributional checks.
Outcome distributions() {
    const MmbmParams model = mmbm::testing::fig3_model();
    const LevelSchedule schedule = LevelSchedule::quadratic(model);
    const int n = 4;
    const FlipFlopLevel level = build_level(model, schedule, n);
    Stream rng(8008);
    const CoupledBundle bundle = simulate_bundle(rng, model, schedule, 8, 6500.0);
    const CoarseLevelData coarse = coarsen(bundle, level);

    bool pass = true;
    std::string detail = fmt::format("{} level-{} intervals", coarse.size(), n);
    std::vector<double> hatted;
    for (int i = 0; i < model.size(); ++i) {
        std::vector<double> L;
        std::vector<double> H;
        for (std::size_t k = 0; k < coarse.size(); ++k) {
            if (coarse.phases[k] != i) continue;
            L.push_back(coarse.L[k]);
            H.push_back(coarse.H[k]);
        }
        const TestOutcome ks_l = ks_exponential(L, level.omega(i), 0.01);
        const TestOutcome ks_h = ks_exponential(H, level.eta(i), 0.01);
        pass = pass && ks_l.pass && ks_h.pass;
        detail += fmt::format("; phase {}: KS L {:.4f}/{:.4f}, H {:.4f}/{:.4f}", i + 1, ks_l.statistic, ks_l.critical,
                              ks_h.statistic, ks_h.critical);
    }
    for (std::size_t k = 0; k < coarse.size(); ++k) hatted.push_back(coarse.L_hat[k]);
    const TestOutcome ks_hat = ks_exponential(hatted, level.lambda, 0.01);
    pass = pass && ks_hat.pass;
    detail += fmt::format("; KS omega L / lambda vs Exp(lambda) {:.4f}/{:.4f}", ks_hat.statistic, ks_hat.critical);

    const TestOutcome chi2 = chi_square_transitions(coarse.phases, level.P, 0.01);
    pass = pass && chi2.pass;
    detail += fmt::format("; chi-square X^n vs P_n {:.2f}/{:.2f} ({} dof)", chi2.statistic, chi2.critical, chi2.dof);

    const std::size_t kmax = 10;
    std::vector<std::vector<double>> chi(kmax);
    std::vector<std::vector<double>> theta(kmax);
    for (std::uint64_t r = 0; r < 5000; ++r) {
        Stream rep = Stream::substream(8008, r);
        const CoupledBundle b = simulate_bundle(rep, model, schedule, 8, 2.0);
        const CoarseLevelData c = coarsen(b, level);
        if (c.size() < kmax) {
            pass = false;
            detail += "; a replication had too few level epochs";
            break;
        }
        for (std::size_t k = 0; k < kmax; ++k) {
            chi[k].push_back(c.chi[k]);
            theta[k].push_back(c.theta[k]);
        }
    }
    double worst_z = 0.0;
    for (std::size_t k = 0; k < kmax && !chi[k].empty(); ++k) {
        const double expected = 2.0 * static_cast<double>(k + 1) / level.lambda;
        worst_z = std::max({worst_z, std::abs(mean(chi[k]) - expected) / standard_error(chi[k]),
                            std::abs(mean(theta[k]) - expected) / standard_error(theta[k])});
    }
    pass = pass && worst_z <= 3.0;
    detail += fmt::format("; epoch means k=1..10 max |z| = {:.2f}", worst_z);
    return {pass, detail};
}

// 9. Determinism across thread counts.
Outcome determinism() {
    cli::ExperimentConfig cfg = rate_experiment();
    std::ostringstream one;
    std::ostringstream many;
    cfg.threads = 1;
    cli::write_rate_csv(one, cli::run_rate(cfg));
    cfg.threads = 4;
    cli::write_rate_csv(many, cli::run_rate(cfg));
    const bool same = one.str() == many.str() && !one.str().empty();
    return {same, fmt::format("threads 1 vs 4: {} bytes, identical: {}", one.str().size(), same ? "yes" : "no")};
}

}  // namespace

int main() {
    int failed = 0;
    auto report = [&](int id, const std::string& name, const std::function<Outcome()>& check) {
        Outcome out;
        try {
            out = check();
        } catch (const std::exception& e) {
            out = {false, std::string("exception: ") + e.what()};
        }
        if (!out.pass) ++failed;
        fmt::print("{} [{}] {}: {}\n", out.pass ? "PASS" : "FAIL", id, name, out.detail);
        std::fflush(stdout);
    };

    RateRun bm;
    {
        const auto start = Clock::now();
        bm.outcome = cli::run_rate(rate_experiment());
        bm.seconds = seconds_since(start);
    }

    report(1, "exact embedding", embedding);
    report(2, "rate reproduction", [&] { return rate(bm); });
    report(3, "phase convergence", [&] { return phase_convergence(bm); });
    report(4, "scalar passage oracle", scalar_passage);
    report(5, "quadratic equation and level independence", level_consistency);
    report(6, "Monte Carlo passage", monte_carlo_passage);
    report(7, "appendix oracles", appendix);
    report(8, "distributional checks", distributions);
    report(9, "determinism", determinism);
    fmt::print("{} of 9 criteria passed\n", 9 - failed);
    return failed == 0 ? 0 : 1;
}
