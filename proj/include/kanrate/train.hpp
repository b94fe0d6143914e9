// Least-squares backfitting for KanModel.
//
// One sweep visits the nodes in index order. For node q the partial residual
// R_q = Y - sum_{q' != q} node_forward(q') is formed, the normalizer is refit
// to the current range of T_q, the outer spline is refit to R_q by least
// squares, and each inner spline psi_qj (j ascending) takes a Gauss-Newton
// step: a weighted univariate spline fit of the pseudo-response
//
//   z_i = psi_qj(x_ij) + (R_q,i - g_q(v_i)) / floor(s_i a_i),  w_i = max((s_i a_i)^2, floor^2)
//
// where s_i = g_q'(v_i) / (hi - lo) is the outer sensitivity and a_i is
// dT_q/dpsi_qj (1 for additive nodes, the product of the other clamped inner
// values for multiplicative nodes). Steps that would increase the node's
// residual sum of squares are halved until they do not; a step that never
// improves is rejected.

#pragma once

#include "kanrate/model.hpp"
#include "kanrate/targets.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace kanrate {

struct TrainConfig {
    int max_sweeps = 50;
    /// Stop when the relative change in training MSE over a sweep is below tol.
    double tol = 1e-6;
    double ridge = 1e-8;
    double deriv_floor = 1e-3;
    /// Knot counts used when building an initial model; unset means
    /// knot_count_rule(n, r, knot_c).
    std::optional<int> inner_knot_count;
    std::optional<int> outer_knot_count;
    double knot_c = 1.0;
    int degree = 3;
    std::uint64_t seed = 0;

    /// Keep every normalizer as it is in the starting model.
    bool freeze_normalizers = false;
    bool update_outer = true;
    bool update_inner = true;
    double normalizer_padding = 0.05;
    int max_step_halvings = 30;

    /// Throws std::invalid_argument for out-of-range settings.
    void validate() const;
};

struct FitTrace {
    double initial_mse = 0.0;
    /// Training MSE after each completed sweep.
    std::vector<double> mse;
    int sweeps = 0;
    bool converged = false;
    /// Inner updates skipped because every weight was zero.
    int skipped_inner_updates = 0;
    /// Gauss-Newton steps rejected after the step-halving search.
    int rejected_inner_steps = 0;
    int ridge_fallbacks = 0;
    /// Sweeps whose MSE exceeded the previous sweep's by more than
    /// 1e-6 (1 + MSE); only possible with refreshed normalizers.
    int nonmonotone_sweeps = 0;
};

struct FitResult {
    KanModel model;
    FitTrace trace;
};

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Backfitting fit. Throws std::invalid_argument on a dimension mismatch and
/// TrainingError if a non-finite value appears.
FitResult fit(const KanModel& model, const Dataset& data, const TrainConfig& cfg);

/// R_q,i = Y_i - sum_{q' != q} node_forward(q', X_i).
std::vector<double> partial_residual(const KanModel& model, const Dataset& data, std::size_t q);

/// Least-squares refit of g_q to `residual` against N_q(T_q(X_i)), with the
/// normalizer held as is.
SplineFit outer_update(const KanNode& node, const Dataset& data, std::span<const double> residual,
                       const TrainConfig& cfg);

struct InnerUpdate {
    SplineFunction spline;
    /// All weights were zero; `spline` is the current psi_qj.
    bool skipped = false;
    bool ridge_fallback = false;
};

/// The Gauss-Newton proposal for psi_qj (no step control).
InnerUpdate inner_update(const KanNode& node, const Dataset& data, std::span<const double> residual,
                         std::size_t j, const TrainConfig& cfg);

/// Pseudo-responses and weights of the inner Gauss-Newton step.
struct InnerSystem {
    std::vector<double> pseudo_response;
    std::vector<double> weights;
};
InnerSystem inner_system(const KanNode& node, const Dataset& data, std::span<const double> residual,
                         std::size_t j, const TrainConfig& cfg);

/// Normalizer covering T_q over the data with the configured padding.
Normalizer refresh_normalizer(const KanNode& node, const Dataset& data, double padding);

/// Mean squared residual of the model over the data.
double training_mse(const KanModel& model, const Dataset& data);

/// Initial model for an architecture with knot counts resolved from cfg or
/// from knot_count_rule(n, r, cfg.knot_c).
KanModel make_initial_model(std::span<const AggregationKind> kinds, const Dataset& data, int r,
                            const TrainConfig& cfg);

}  // namespace kanrate
