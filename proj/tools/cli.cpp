#include "cli.hpp"

#include "mmbm/error.hpp"
#include "mmbm/io.hpp"
#include "mmbm/parallel.hpp"
#include "mmbm/passage.hpp"
#include "mmbm/rng.hpp"
#include "mmbm/sampling.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace mmbm::cli {

using nlohmann::json;

LevelSchedule ExperimentConfig::schedule() const {
    if (schedule_rule == "explicit") return LevelSchedule::explicit_values(model, schedule_values);
    return LevelSchedule::quadratic(model);
}

double ExperimentConfig::simulation_horizon() const { return sim_horizon.value_or(2.0 * horizon + 0.5); }

namespace {

template <typename T>
T field(const json& doc, const char* key, T fallback) {
    if (!doc.contains(key) || doc.at(key).is_null()) return fallback;
    try {
        return doc.at(key).get<T>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ConfigError, fmt::format("config field \"{}\": {}", key, e.what()));
    }
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir,
                              const Overrides& overrides) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ConfigError, fmt::format("config is not valid JSON: {}", e.what()));
    }
    if (!doc.is_object()) throw Error(ErrorCode::ConfigError, "config must be a JSON object");

    ExperimentConfig cfg;
    if (doc.contains("model")) {
        cfg.model = model_from_json(doc.at("model"));
    } else if (doc.contains("model_file")) {
        std::filesystem::path file = field<std::string>(doc, "model_file", "");
        if (file.is_relative()) file = base_dir / file;
        cfg.model = load_model_file(file);
    } else {
        throw Error(ErrorCode::ConfigError, "config needs \"model\" or \"model_file\"");
    }

    if (doc.contains("schedule")) {
        const json& sched = doc.at("schedule");
        cfg.schedule_rule = field<std::string>(sched, "rule", "quadratic");
        if (cfg.schedule_rule == "explicit") {
            cfg.schedule_values = field<std::vector<double>>(sched, "lambdas", {});
        } else if (cfg.schedule_rule != "quadratic") {
            throw Error(ErrorCode::ConfigError, fmt::format("unknown schedule rule \"{}\"", cfg.schedule_rule));
        }
    }
    cfg.levels = field(doc, "levels", cfg.levels);
    cfg.n_max = field(doc, "n_max", cfg.n_max);
    cfg.horizon = field(doc, "horizon", cfg.horizon);
    if (doc.contains("sim_horizon") && !doc.at("sim_horizon").is_null()) {
        cfg.sim_horizon = field(doc, "sim_horizon", 0.0);
    }
    cfg.replications = field(doc, "replications", cfg.replications);
    cfg.base_seed = field(doc, "base_seed", cfg.base_seed);
    cfg.threads = field(doc, "threads", cfg.threads);
    cfg.out = field<std::string>(doc, "out", cfg.out.string());
    cfg.alpha = field(doc, "alpha", cfg.alpha);
    const auto summation = field<std::string>(doc, "summation", "plain");
    if (summation == "compensated") {
        cfg.summation = Summation::Compensated;
    } else if (summation != "plain") {
        throw Error(ErrorCode::ConfigError, fmt::format("unknown summation \"{}\"", summation));
    }
    if (doc.contains("passage")) {
        const json& p = doc.at("passage");
        cfg.passage.x = field(p, "x", cfg.passage.x);
        cfg.passage.mc_bundles = field(p, "mc_bundles", cfg.passage.mc_bundles);
        cfg.passage.mc_horizon = field(p, "mc_horizon", cfg.passage.mc_horizon);
        cfg.passage.mc_level = field(p, "mc_level", cfg.passage.mc_level);
        cfg.passage.start_phases = field(p, "start_phases", cfg.passage.start_phases);
        cfg.passage.max_iters = field(p, "max_iters", cfg.passage.max_iters);
    }

    if (overrides.seed) cfg.base_seed = *overrides.seed;
    if (overrides.threads) cfg.threads = *overrides.threads;
    if (overrides.out) cfg.out = *overrides.out;

    if (cfg.n_max < 0) throw Error(ErrorCode::ConfigError, "n_max must be nonnegative");
    if (cfg.levels.empty()) throw Error(ErrorCode::ConfigError, "levels must not be empty");
    for (int n : cfg.levels) {
        if (n < 0 || n > cfg.n_max) {
            throw Error(ErrorCode::ConfigError, fmt::format("level {} outside [0, n_max = {}]", n, cfg.n_max));
        }
    }
    if (cfg.replications < 1) throw Error(ErrorCode::ConfigError, "replications must be >= 1");
    if (!(cfg.horizon >= 0.0)) throw Error(ErrorCode::ConfigError, "horizon must be >= 0");
    if (cfg.threads < 1) throw Error(ErrorCode::ConfigError, "threads must be >= 1");
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw Error(ErrorCode::ConfigError, "alpha must lie in (0, 1)");
    if (!(cfg.passage.x >= 0.0)) throw Error(ErrorCode::ConfigError, "passage.x must be >= 0");
    for (int i : cfg.passage.start_phases) {
        if (i < 0 || i >= cfg.model.size()) {
            throw Error(ErrorCode::ConfigError, fmt::format("start phase {} out of range", i));
        }
    }
    if (cfg.schedule_rule == "explicit" && static_cast<int>(cfg.schedule_values.size()) < cfg.n_max) {
        throw Error(ErrorCode::ConfigError, "explicit schedule must list lambda_1..lambda_{n_max}");
    }
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, const Overrides& overrides) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ConfigError, fmt::format("cannot open config {}", path.string()));
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str(), path.parent_path(), overrides);
}

namespace {

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, fmt::format("cannot write {}", path.string()));
    return out;
}

void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::IoError, fmt::format("cannot create {}: {}", dir.string(), ec.message()));
    // create_directories succeeds on an existing read-only directory; probe it.
    const auto probe = dir / ".mmbm-write-probe";
    {
        std::ofstream test(probe);
        if (!test) throw Error(ErrorCode::IoError, fmt::format("output directory {} is not writable", dir.string()));
    }
    std::filesystem::remove(probe, ec);
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out) throw Error(ErrorCode::IoError, fmt::format("write to {} failed", path.string()));
}

/// Levels whose intensity is admissible for the model (lambda_n > 0).
std::vector<int> usable_levels(const ExperimentConfig& config, const LevelSchedule& schedule) {
    std::vector<int> out;
    for (int n : config.levels) {
        if (schedule.lambda(n) > 0.0) out.push_back(n);
    }
    return out;
}

struct Check {
    std::string name;
    bool pass = false;
    std::string detail;
};

}  // namespace

int cmd_validate(const ExperimentConfig& config, std::ostream& report) {
    const MmbmParams& params = config.model;
    const LevelSchedule schedule = config.schedule();
    std::vector<Check> checks;
    auto check = [&](std::string name, bool pass, std::string detail = {}) {
        checks.push_back({std::move(name), pass, std::move(detail)});
    };
    check("model: generator, distribution and volatilities", true,
          fmt::format("{} phases, lambda_0 = {}", params.size(), params.lambda0()));

    const std::vector<int> levels = usable_levels(config, schedule);
    check("levels: at least one admissible level", !levels.empty());
    const int m = params.size();
    const Matrix I = Matrix::Identity(m, m);

    for (int n : levels) {
        const FlipFlopLevel level = build_level(params, schedule, n);
        double product = 0.0;
        double difference = 0.0;
        double drift = 0.0;
        for (int i = 0; i < m; ++i) {
            const double s2 = params.sigma(i) * params.sigma(i);
            product = std::max(product, std::abs(level.omega(i) * level.eta(i) * s2 / level.lambda - 1.0));
            const double diff_scale = std::max(1.0, std::abs(2.0 * params.mu(i)));
            difference = std::max(difference, std::abs((level.omega(i) - level.eta(i)) * s2 - 2.0 * params.mu(i)) / diff_scale);
            const double drift_scale = std::max(1.0, std::abs(2.0 * params.mu(i) / level.lambda));
            drift = std::max(drift, std::abs(-1.0 / level.omega(i) + 1.0 / level.eta(i) - 2.0 * params.mu(i) / level.lambda) /
                                        drift_scale);
        }
        check(fmt::format("level {}: omega*eta*sigma^2 = lambda", n), product <= kIdentityTol, fmt::format("{:.3g}", product));
        check(fmt::format("level {}: (omega-eta)*sigma^2 = 2 mu", n), difference <= kIdentityTol, fmt::format("{:.3g}", difference));
        check(fmt::format("level {}: drift per cycle = 2 mu / lambda", n), drift <= kIdentityTol, fmt::format("{:.3g}", drift));
        const bool stochastic = level.P.minCoeff() >= 0.0 && (level.P.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12;
        check(fmt::format("level {}: P_n row-stochastic", n), stochastic);
        const bool generator = (level.sfp_generator.rowwise().sum()).cwiseAbs().maxCoeff() <= 1e-9 * level.lambda;
        check(fmt::format("level {}: fluid generator rows sum to zero", n), generator);

        const PassageSolution sol = solve_passage(params, level, RiccatiOptions{.max_iters = config.passage.max_iters});
        check(fmt::format("level {}: Riccati iteration converged", n), sol.converged,
              fmt::format("{} iterations", sol.iterations));
        check(fmt::format("level {}: Riccati defect <= 1e-12", n), sol.riccati_residual <= 1e-12,
              fmt::format("{:.3g}", sol.riccati_residual));
        check(fmt::format("level {}: quadratic residual <= 1e-8", n), sol.quadratic_residual <= 1e-8,
              fmt::format("{:.3g}", sol.quadratic_residual));
        const bool psi_ok = sol.psi.minCoeff() >= 0.0 && sol.psi.maxCoeff() <= 1.0 &&
                            sol.psi.rowwise().sum().maxCoeff() <= 1.0 + 1e-10;
        check(fmt::format("level {}: Psi substochastic", n), psi_ok && sol.monotone);
        const Matrix off = sol.u - Matrix(sol.u.diagonal().asDiagonal());
        const bool subgen = off.minCoeff() >= -1e-12 && sol.u.rowwise().sum().maxCoeff() <= 1e-10;
        check(fmt::format("level {}: U is a sub-generator", n), subgen);
        const Matrix e = passage_matrix(sol.u, config.passage.x);
        check(fmt::format("level {}: e^(U x) substochastic", n), e.rowwise().sum().maxCoeff() <= 1.0 + 1e-10);
        (void)I;
    }
    if (levels.size() >= 2) {
        try {
            const double dist =
                level_independence(params, schedule, levels, RiccatiOptions{.max_iters = config.passage.max_iters});
            check("passage generator identical across levels (<= 1e-8)", dist <= 1e-8, fmt::format("{:.3g}", dist));
        } catch (const Error& e) {
            check("passage generator identical across levels (<= 1e-8)", false, e.what());
        }
    }

    // Coupling invariants on a few short replications.
    if (!levels.empty()) {
        const int finest = *std::max_element(levels.begin(), levels.end());
        double worst_embed = 0.0;
        double worst_min = 0.0;
        bool phases_ok = true;
        bool nested = true;
        bool consistent = true;
        for (std::uint64_t r = 0; r < 5; ++r) {
            Stream rng = Stream::substream(config.base_seed, r);
            const CoupledBundle bundle = simulate_bundle(rng, params, schedule, finest, 1.0, config.summation);
            const CoarseLevelData top = coarsen(bundle, build_level(params, schedule, finest));
            for (int n : levels) {
                const FlipFlopLevel level = build_level(params, schedule, n);
                const CoarseLevelData coarse = coarsen(bundle, level);
                const SfpPath path = build_sfp_path(coarse, level, config.summation);
                const DiscrepancyReport rep = discrepancy(bundle, coarse, path, 1.0);
                worst_embed = std::max(worst_embed, rep.embed_gap);
                worst_min = std::max(worst_min, rep.min_embed_gap);
                for (std::size_t k = 0; k < coarse.size(); ++k) {
                    if (sfp_state(path, coarse.chi[k]).phase != coarse.phases[k + 1]) phases_ok = false;
                }
                const auto fine = bundle.ledger.epochs;
                for (double t : coarse.theta) {
                    if (!std::binary_search(fine.begin(), fine.end(), t)) nested = false;
                }
                const CoarseLevelData via = coarsen(top, level);
                if (via.L != coarse.L || via.H != coarse.H || via.theta != coarse.theta) consistent = false;
            }
        }
        check("coupling: R^n(chi_k) = R(theta_k) within 1e-9", worst_embed <= 1e-9, fmt::format("{:.3g}", worst_embed));
        check("coupling: R^n at down-segment ends = interval minima within 1e-9", worst_min <= 1e-9,
              fmt::format("{:.3g}", worst_min));
        check("coupling: phase of J^n at chi_k equals J(theta_k)", phases_ok);
        check("coupling: level epochs nested in the finest ledger", nested);
        check("coupling: coarsening through an intermediate level is identical", consistent);
    }

    std::size_t failures = 0;
    for (const Check& c : checks) {
        report << (c.pass ? "PASS " : "FAIL ") << c.name;
        if (!c.detail.empty()) report << " [" << c.detail << ']';
        report << '\n';
        if (!c.pass) ++failures;
    }
    report << fmt::format("{} checks, {} failed\n", checks.size(), failures);
    return failures == 0 ? kOk : kFailure;
}

int cmd_simulate(const ExperimentConfig& config, std::ostream& report) {
    const MmbmParams& params = config.model;
    const LevelSchedule schedule = config.schedule();
    ensure_dir(config.out);
    Stream rng = Stream::substream(config.base_seed, 0);
    const int finest = std::max(config.n_max, *std::max_element(config.levels.begin(), config.levels.end()));
    const CoupledBundle bundle = simulate_bundle(rng, params, schedule, finest, config.horizon, config.summation);

    const auto ledger_path = config.out / "ledger.csv";
    auto ledger_out = open_output(ledger_path);
    write_ledger_csv(ledger_out, bundle.ledger, bundle.phases, params);
    finish(ledger_out, ledger_path);

    const auto skeleton_path = config.out / "skeleton.csv";
    auto skeleton_out = open_output(skeleton_path);
    write_skeleton_csv(skeleton_out, bundle, params);
    finish(skeleton_out, skeleton_path);

    for (int n : usable_levels(config, schedule)) {
        const FlipFlopLevel level = build_level(params, schedule, n);
        const CoarseLevelData coarse = coarsen(bundle, level);
        const SfpPath path = build_sfp_path(coarse, level, config.summation);
        const auto path_file = config.out / fmt::format("path_n{}.csv", n);
        auto out = open_output(path_file);
        write_path_csv(out, path, params);
        finish(out, path_file);
        report << fmt::format("level {}: {} cycles -> {}\n", n, coarse.size(), path_file.string());
    }
    report << fmt::format("skeleton: {} epochs -> {}\n", bundle.size(), skeleton_path.string());
    return kOk;
}

RateOutcome run_rate(const ExperimentConfig& config) {
    const MmbmParams& params = config.model;
    const LevelSchedule schedule = config.schedule();
    if (!(config.horizon > 0.0)) throw Error(ErrorCode::ConfigError, "rate needs horizon > 0");
    const std::vector<int> levels = usable_levels(config, schedule);
    if (levels.empty()) throw Error(ErrorCode::ConfigError, "no admissible levels");
    std::vector<FlipFlopLevel> flip_flops;
    for (int n : levels) flip_flops.push_back(build_level(params, schedule, n));

    std::vector<std::vector<DiscrepancyReport>> per_rep(config.replications);
    std::vector<char> failed(config.replications, 0);
    parallel_for(config.replications, config.threads, [&](std::size_t r) {
        try {
            Stream rng = Stream::substream(config.base_seed, r);
            const CoupledBundle bundle =
                simulate_bundle(rng, params, schedule, config.n_max, config.simulation_horizon(), config.summation);
            for (const FlipFlopLevel& level : flip_flops) {
                const CoarseLevelData coarse = coarsen(bundle, level);
                const SfpPath path = build_sfp_path(coarse, level, config.summation);
                per_rep[r].push_back(discrepancy(bundle, coarse, path, config.horizon));
            }
        } catch (const std::exception& e) {
            spdlog::warn("replication {} failed: {}", r, e.what());
            per_rep[r].clear();
            failed[r] = 1;
        }
    });

    RateOutcome outcome;
    for (std::size_t r = 0; r < config.replications; ++r) {
        if (failed[r]) {
            ++outcome.failed;
            continue;
        }
        for (const DiscrepancyReport& rep : per_rep[r]) outcome.rows.push_back({r, rep});
    }

    std::vector<std::pair<double, double>> points;
    const int unclamped = schedule.first_unclamped(config.n_max);
    for (int n : levels) {
        std::vector<double> sup;
        std::vector<double> chi_theta;
        std::vector<double> mismatch;
        LevelSummary summary;
        summary.n = n;
        for (const RateRow& row : outcome.rows) {
            if (row.report.n != n) continue;
            sup.push_back(row.report.sup_level_gap);
            chi_theta.push_back(row.report.chi_theta_gap);
            mismatch.push_back(row.report.phase_mismatch);
            summary.max_embed_gap = std::max(summary.max_embed_gap, row.report.embed_gap);
            if (row.report.partial) ++summary.partial;
        }
        if (sup.empty()) continue;
        summary.median_sup_gap = median(sup);
        summary.median_chi_theta_gap = median(chi_theta);
        summary.median_phase_mismatch = median(mismatch);
        outcome.levels.push_back(summary);
        if (n >= unclamped && n > 1 && summary.median_sup_gap > 0.0) {
            points.emplace_back(static_cast<double>(n), summary.median_sup_gap);
        }
    }
    std::vector<double> distinct;
    for (const auto& p : points) distinct.push_back(p.first);
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() >= 3) {
        outcome.fit = fit_rate(points);
    } else {
        outcome.fit_note = "fit skipped: needs at least three levels with lambda_n above lambda_0";
    }
    return outcome;
}

void write_rate_csv(std::ostream& out, const RateOutcome& outcome) {
    out << "seed,n,sup_gap,embed_gap,chi_theta_gap,phase_mismatch\n";
    for (const RateRow& row : outcome.rows) {
        out << row.seed << ',' << row.report.n << ',' << format_double(row.report.sup_level_gap) << ','
            << format_double(row.report.embed_gap) << ',' << format_double(row.report.chi_theta_gap) << ','
            << format_double(row.report.phase_mismatch) << '\n';
    }
}

int cmd_rate(const ExperimentConfig& config, std::ostream& report) {
    ensure_dir(config.out);
    const RateOutcome outcome = run_rate(config);

    const auto csv_path = config.out / "rate.csv";
    auto csv = open_output(csv_path);
    write_rate_csv(csv, outcome);
    finish(csv, csv_path);

    json summary;
    summary["replications"] = config.replications;
    summary["failed_replications"] = outcome.failed;
    summary["horizon"] = config.horizon;
    summary["simulation_horizon"] = config.simulation_horizon();
    summary["n_max"] = config.n_max;
    summary["levels"] = json::array();
    for (const LevelSummary& s : outcome.levels) {
        summary["levels"].push_back({{"n", s.n},
                                     {"median_sup_gap", s.median_sup_gap},
                                     {"median_chi_theta_gap", s.median_chi_theta_gap},
                                     {"median_phase_mismatch", s.median_phase_mismatch},
                                     {"max_embed_gap", s.max_embed_gap},
                                     {"partial_reports", s.partial},
                                     {"eps_n", rate_scale(s.n)},
                                     {"delta_n", std::isfinite(delta_scale(s.n)) ? json(delta_scale(s.n)) : json()}});
    }
    if (outcome.fit) {
        summary["fit"] = {{"slope", outcome.fit->slope},
                          {"intercept", outcome.fit->intercept},
                          {"slope_logcorrected", outcome.fit->slope_logcorrected},
                          {"intercept_logcorrected", outcome.fit->intercept_logcorrected},
                          {"rss", outcome.fit->rss}};
    } else {
        summary["fit"] = nullptr;
        summary["fit_note"] = outcome.fit_note;
    }
    const auto summary_path = config.out / "rate_summary.json";
    auto summary_out = open_output(summary_path);
    summary_out << summary.dump(2) << '\n';
    finish(summary_out, summary_path);

    const auto medians_path = config.out / "rate_medians.csv";
    auto medians = open_output(medians_path);
    medians << "n,median_sup_gap,median_chi_theta_gap,median_phase_mismatch\n";
    for (const LevelSummary& s : outcome.levels) {
        medians << s.n << ',' << format_double(s.median_sup_gap) << ',' << format_double(s.median_chi_theta_gap)
                << ',' << format_double(s.median_phase_mismatch) << '\n';
    }
    finish(medians, medians_path);

    const auto plot_path = config.out / "rate_plot.gp";
    auto plot = open_output(plot_path);
    const double anchor = outcome.levels.empty() ? 1.0 : outcome.levels.front().median_sup_gap *
                                                              std::sqrt(static_cast<double>(outcome.levels.front().n));
    plot << "# gnuplot -p rate_plot.gp\n"
         << "set datafile separator ','\n"
         << "set logscale xy\n"
         << "set xlabel 'n'\n"
         << "set ylabel 'median grid sup |R - R^n|'\n"
         << "set key top right\n"
         << fmt::format("ref(x) = {} * x**(-0.5)\n", format_double(anchor))
         << "plot 'rate_medians.csv' every ::1 using 1:2 with linespoints title 'median sup gap', \\\n"
         << "     ref(x) with lines dashtype 2 title 'slope -1/2'\n";
    finish(plot, plot_path);

    for (const LevelSummary& s : outcome.levels) {
        report << fmt::format("n = {:3d}  median sup gap {:.6g}  median |chi - theta| {:.6g}  phase mismatch {:.6g}\n",
                              s.n, s.median_sup_gap, s.median_chi_theta_gap, s.median_phase_mismatch);
    }
    if (outcome.fit) {
        report << fmt::format("fitted slope {:.4f} (log-corrected {:.4f})\n", outcome.fit->slope,
                              outcome.fit->slope_logcorrected);
    } else {
        report << outcome.fit_note << '\n';
    }
    if (outcome.failed > 0) report << fmt::format("{} replications failed\n", outcome.failed);
    return kOk;
}

int cmd_passage(const ExperimentConfig& config, std::ostream& report) {
    const MmbmParams& params = config.model;
    const LevelSchedule schedule = config.schedule();
    ensure_dir(config.out);
    const std::vector<int> levels = usable_levels(config, schedule);
    if (levels.empty()) throw Error(ErrorCode::ConfigError, "no admissible levels");
    const RiccatiOptions options{.max_iters = config.passage.max_iters};

    std::vector<PassageSolution> solutions;
    bool all_converged = true;
    for (int n : levels) {
        solutions.push_back(solve_passage(params, build_level(params, schedule, n), options));
        if (!solutions.back().converged) {
            all_converged = false;
            spdlog::error("Riccati iteration at level {} did not converge after {} iterations", n,
                          solutions.back().iterations);
        }
    }
    double independence = 0.0;
    for (std::size_t a = 0; a < solutions.size(); ++a) {
        for (std::size_t b = a + 1; b < solutions.size(); ++b) {
            independence = std::max(independence, (solutions[a].u - solutions[b].u).cwiseAbs().maxCoeff());
        }
    }
    const Matrix& u = solutions.back().u;
    const Matrix passage = passage_matrix(u, config.passage.x);
    const double drift = params.mean_drift();

    const auto json_path = config.out / "passage.json";
    auto out = open_output(json_path);
    out << "{\n  \"mean_drift\": " << format_double(drift) << ",\n  \"regime\": \""
        << (drift <= 0.0 ? "certain passage" : "defective passage") << "\",\n  \"x\": "
        << format_double(config.passage.x) << ",\n  \"levels\": [";
    for (std::size_t s = 0; s < solutions.size(); ++s) {
        out << (s ? ", " : "\n    ");
        write_passage_solution(out, solutions[s], 4);
    }
    out << "\n  ],\n  \"level_independence\": "
        << (solutions.size() >= 2 ? format_double(independence) : std::string("null"))
        << ",\n  \"passage_matrix\": ";
    write_matrix(out, passage);
    out << "\n}\n";
    finish(out, json_path);

    for (const PassageSolution& sol : solutions) {
        report << fmt::format("level {}: {} iterations, Riccati defect {:.3g}, quadratic residual {:.3g}{}\n", sol.n,
                              sol.iterations, sol.riccati_residual, sol.quadratic_residual,
                              sol.converged ? "" : " (NOT CONVERGED)");
    }
    if (solutions.size() >= 2) report << fmt::format("level independence {:.3g}\n", independence);

    if (config.passage.mc_bundles > 0) {
        std::vector<int> starts = config.passage.start_phases;
        if (starts.empty()) {
            for (int i = 0; i < params.size(); ++i) starts.push_back(i);
        }
        const auto mc_path = config.out / "passage_mc.csv";
        auto mc = open_output(mc_path);
        mc << "start_phase,target,empirical,theoretical,std_error,within_3se\n";
        const double N = static_cast<double>(config.passage.mc_bundles);
        for (int start : starts) {
            const PassageTally tally =
                mc_passage(params, schedule, config.passage.mc_level, config.passage.mc_horizon, config.passage.x,
                           start, config.passage.mc_bundles, config.base_seed + static_cast<std::uint64_t>(start),
                           config.threads);
            auto emit = [&](const std::string& target, double empirical, double theoretical) {
                const double p = std::clamp(theoretical, 0.0, 1.0);
                const double se = std::sqrt(p * (1.0 - p) / N);
                const bool ok = std::abs(empirical - p) <= 3.0 * se;
                mc << params.phases[static_cast<std::size_t>(start)] << ',' << target << ','
                   << format_double(empirical) << ',' << format_double(p) << ',' << format_double(se) << ','
                   << (ok ? "true" : "false") << '\n';
            };
            double row_sum = 0.0;
            for (int j = 0; j < params.size(); ++j) {
                emit(params.phases[static_cast<std::size_t>(j)], tally.fraction(static_cast<std::size_t>(j)),
                     passage(start, j));
                row_sum += passage(start, j);
            }
            emit("never", tally.never_fraction(), 1.0 - row_sum);
        }
        finish(mc, mc_path);
        report << "Monte Carlo comparison -> " << mc_path.string() << '\n';
    }
    return all_converged ? kOk : kFailure;
}

namespace {

void configure_logging() {
    auto logger = spdlog::stderr_color_mt("mmbm-coupler");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::warn);
    if (const char* env = std::getenv("MMBM_COUPLER_LOG")) {
        spdlog::set_level(spdlog::level::from_str(env));
    }
}

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::ConfigError: return kConfigError;
        case ErrorCode::IoError: return kIoError;
        default: return kFailure;
    }
}

}  // namespace

int run(int argc, char** argv) {
    if (!spdlog::get("mmbm-coupler")) configure_logging();

    CLI::App app{"Coupled MMBM / fluid-process simulation and first-passage toolkit", "mmbm-coupler"};
    app.require_subcommand(1);
    std::string config_path;
    std::uint64_t seed = 0;
    int threads = 0;
    std::string out_dir;
    for (const char* name : {"validate", "simulate", "rate", "passage"}) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "experiment config (JSON)")->required();
        sub->add_option("--seed", seed, "base seed");
        sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--out", out_dir, "output directory");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfigError;
    }
    CLI::App* chosen = app.get_subcommands().front();
    Overrides overrides;
    if (chosen->count("--seed")) overrides.seed = seed;
    if (chosen->count("--threads")) overrides.threads = threads;
    if (chosen->count("--out")) overrides.out = out_dir;

    try {
        const ExperimentConfig config = load_config(config_path, overrides);
        const std::string name = chosen->get_name();
        spdlog::info("running {} with base seed {} on {} threads", name, config.base_seed, config.threads);
        if (name == "validate") return cmd_validate(config, std::cout);
        if (name == "simulate") return cmd_simulate(config, std::cout);
        if (name == "rate") return cmd_rate(config, std::cout);
        return cmd_passage(config, std::cout);
    } catch (const Error& e) {
        const int rc = exit_code_for(e.code());
        if (chosen->get_name() == "validate" && rc == kFailure) {
            std::cout << "FAIL model: " << e.what() << '\n';
        }
        std::cerr << "mmbm-coupler: " << e.what() << '\n';
        return rc;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "mmbm-coupler: " << e.what() << '\n';
        return kIoError;
    } catch (const std::exception& e) {
        std::cerr << "mmbm-coupler: " << e.what() << '\n';
        return kFailure;
    }
}

}  // namespace mmbm::cli
