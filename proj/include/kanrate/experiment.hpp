// Convergence studies: fit KAN estimators over a grid of sample sizes, estimate
// the L2 risk on fresh noiseless points and fit log-log slopes of the median
// test error against n.

#pragma once

#include "kanrate/model.hpp"
#include "kanrate/targets.hpp"
#include "kanrate/train.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace kanrate {

struct ExperimentConfig {
    TargetSpec target;
    double sigma = 0.05;
    std::vector<std::string> architectures{"additive"};
    std::vector<long long> n_grid{100, 200, 400, 800, 1600, 3200, 6400, 12800};
    int replications = 10;
    std::uint64_t base_seed = 0;
    int test_points = 20000;
    int q = 4;
    TrainConfig train;
    /// Off by default so that reports are reproducible byte for byte.
    bool record_wall_time = false;

    /// Throws std::invalid_argument.
    void validate() const;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Flat key = value text with [target], [train] and [experiment] sections.
/// Unknown sections or keys and malformed values throw ConfigError.
ExperimentConfig parse_experiment_config(std::string_view text);
ExperimentConfig load_experiment_config(const std::string& path);

/// Mean of (model(x) - f(x))^2 over m uniform points drawn from `seed`.
double estimate_test_mse(const KanModel& model, const TargetSpec& spec, int m, std::uint64_t seed);

struct ReportRow {
    std::string arch;
    long long n = 0;
    /// Seed of the training data of this cell.
    std::uint64_t seed = 0;
    double train_mse = 0.0;
    double test_mse = 0.0;
    int sweeps = 0;
    long long wall_ms = 0;

    bool operator==(const ReportRow& other) const = default;
};

/// Seeds of cell (arch, n, rep). The data and test seeds depend only on
/// (base_seed, n, rep), so every architecture sees the same samples.
std::uint64_t cell_data_seed(std::uint64_t base_seed, long long n, int rep);
std::uint64_t cell_init_seed(std::uint64_t base_seed, std::string_view arch, long long n, int rep);
std::uint64_t cell_test_seed(std::uint64_t base_seed, long long n, int rep);

class CellError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Generate, fit and evaluate one cell. Errors are rethrown as CellError
/// naming the cell.
ReportRow run_cell(const ExperimentConfig& cfg, const std::string& arch, long long n, int rep);

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double stderr_slope = 0.0;
    int n_points = 0;
};

/// OLS of ln(mse) on ln(n). Needs at least 3 points with n > 0 and mse > 0;
/// throws std::invalid_argument otherwise.
SlopeFit fit_loglog_slope(std::span<const std::pair<double, double>> points);

struct ArchSummary {
    std::string arch;
    /// (n, median test MSE) for every n with at least one completed cell.
    std::vector<std::pair<long long, double>> medians;
    std::optional<SlopeFit> slope;
};

struct CellFailure {
    std::string arch;
    long long n = 0;
    int rep = 0;
    std::string message;
};

struct ConvergenceReport {
    /// Sorted by (arch, n, seed).
    std::vector<ReportRow> rows;
    /// Sorted by arch.
    std::vector<ArchSummary> summaries;
    std::vector<CellFailure> failures;
};

double median(std::vector<double> values);

/// Per-architecture medians and slopes from completed rows.
std::vector<ArchSummary> summarize(const std::vector<ReportRow>& rows);

/// Runs every (arch, n, rep) cell on up to `workers` threads. The result does
/// not depend on the worker count.
ConvergenceReport run_experiment(const ExperimentConfig& cfg, int workers = 1);

/// Writes rows.csv, summary.csv and medians.csv into `dir`, creating it.
void write_report(const ConvergenceReport& report, const std::string& dir);
/// Reads rows.csv from `dir` and recomputes the summaries.
ConvergenceReport read_report(const std::string& dir);

std::string rows_csv(const std::vector<ReportRow>& rows);
std::string summary_csv(const std::vector<ArchSummary>& summaries);
std::string medians_csv(const std::vector<ArchSummary>& summaries);

}  // namespace kanrate
