#pragma once

#include "mmbm/coupling.hpp"
#include "mmbm/model.hpp"
#include "mmbm/stats.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mmbm::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kConfigError = 2, kIoError = 3 };

struct PassageOptions {
    double x = 1.0;
    std::size_t mc_bundles = 0;
    double mc_horizon = 50.0;
    int mc_level = 1;
    std::vector<int> start_phases;  // empty: every phase
    std::size_t max_iters = 1'000'000;
};

struct ExperimentConfig {
    MmbmParams model;
    std::string schedule_rule = "quadratic";
    std::vector<double> schedule_values;
    std::vector<int> levels{4, 8, 16, 32};
    int n_max = 64;
    double horizon = 0.5;
    std::optional<double> sim_horizon;
    std::size_t replications = 200;
    std::uint64_t base_seed = 1;
    int threads = 1;
    std::filesystem::path out = "out";
    Summation summation = Summation::Plain;
    double alpha = 0.01;
    PassageOptions passage;

    [[nodiscard]] LevelSchedule schedule() const;
    /// Simulation horizon for rate runs: sim_horizon, or 2T + 0.5 so that the
    /// fluid breakpoints cover [0, T] with high probability.
    [[nodiscard]] double simulation_horizon() const;
};

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<std::filesystem::path> out;
};

/// Parses a config document. `base_dir` resolves a relative `model_file`.
/// Flags in `overrides` take precedence over the document.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir,
                              const Overrides& overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path, const Overrides& overrides = {});

struct RateRow {
    std::uint64_t seed = 0;
    DiscrepancyReport report;
};

struct LevelSummary {
    int n = 0;
    double median_sup_gap = 0.0;
    double median_chi_theta_gap = 0.0;
    double median_phase_mismatch = 0.0;
    double max_embed_gap = 0.0;
    std::size_t partial = 0;
};

struct RateOutcome {
    std::vector<RateRow> rows;
    std::vector<LevelSummary> levels;
    std::optional<RateFit> fit;
    std::string fit_note;
    std::size_t failed = 0;
};

/// The replication loop behind `rate`, without touching the filesystem.
RateOutcome run_rate(const ExperimentConfig& config);

void write_rate_csv(std::ostream& out, const RateOutcome& outcome);

int cmd_validate(const ExperimentConfig& config, std::ostream& report);
int cmd_simulate(const ExperimentConfig& config, std::ostream& report);
int cmd_rate(const ExperimentConfig& config, std::ostream& report);
int cmd_passage(const ExperimentConfig& config, std::ostream& report);

/// Full command line entry point; returns the process exit code.
int run(int argc, char** argv);

}  // namespace mmbm::cli
