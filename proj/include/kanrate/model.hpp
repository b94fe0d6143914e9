// Single-hidden-layer Kolmogorov-Arnold regression model
//
//   f(x) = sum_q g_q(N_q(T_q(x))),   T_q(x) = sum_j psi_qj(x_j)  (additive node)
//                                    T_q(x) = prod_j psi_qj(x_j) (multiplicative node)
//
// where psi_qj and g_q are B-splines on [0,1] and N_q is an affine normalizer
// that maps the range of T_q onto the outer spline's domain.

#pragma once

#include "kanrate/spline.hpp"

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace kanrate {

enum class AggregationKind { Additive, Multiplicative };

std::string_view to_string(AggregationKind kind);
/// Accepts "additive" and "multiplicative"; throws std::invalid_argument.
AggregationKind parse_aggregation_kind(std::string_view text);

/// u -> clamp((u - lo) / (hi - lo), 0, 1).
class Normalizer {
public:
    Normalizer() = default;
    /// Throws std::invalid_argument unless lo < hi and both are finite.
    Normalizer(double lo, double hi);

    double lo() const { return lo_; }
    double hi() const { return hi_; }
    double width() const { return hi_ - lo_; }
    double operator()(double u) const;

    /// Range of `values` widened by `padding` times its width on each side.
    /// A degenerate range is widened to unit width around its centre.
    static Normalizer fit(std::span<const double> values, double padding = 0.05);

    bool operator==(const Normalizer& other) const = default;

private:
    double lo_ = 0.0;
    double hi_ = 1.0;
};

inline constexpr double kDefaultOutputBound = 10.0;

struct KanNode {
    AggregationKind kind = AggregationKind::Additive;
    std::vector<SplineFunction> inner;
    Normalizer normalizer;
    SplineFunction outer;
    /// Inner values of multiplicative nodes are clamped to [-M, M].
    double output_bound = kDefaultOutputBound;

    bool operator==(const KanNode& other) const = default;
};

/// Clamp applied to inner values before aggregation (identity for additive nodes).
double clamp_inner(const KanNode& node, double value);

/// T_q(x). Throws std::domain_error if a coordinate is outside [0,1] and
/// std::invalid_argument on a dimension mismatch.
double node_transform(const KanNode& node, std::span<const double> x);

/// g_q(N_q(T_q(x))).
double node_forward(const KanNode& node, std::span<const double> x);

class KanModel {
public:
    /// Validates the model invariants; throws std::invalid_argument.
    KanModel(int dimension, std::vector<KanNode> nodes, int smoothness_hint = 2);

    int dimension() const { return dimension_; }
    int smoothness_hint() const { return smoothness_hint_; }
    std::size_t node_count() const { return nodes_.size(); }
    const std::vector<KanNode>& nodes() const { return nodes_; }
    const KanNode& node(std::size_t q) const { return nodes_.at(q); }

    /// Replaces node q; the replacement must have the model's dimension.
    void set_node(std::size_t q, KanNode node);

    bool operator==(const KanModel& other) const = default;

private:
    int dimension_ = 1;
    int smoothness_hint_ = 2;
    std::vector<KanNode> nodes_;
};

double model_forward(const KanModel& model, std::span<const double> x);

struct InitOptions {
    int degree = 3;
    int inner_interior_count = 3;
    int outer_interior_count = 3;
    /// Half-width of the uniform perturbation added to inner coefficients.
    double noise = 0.01;
    double output_bound = kDefaultOutputBound;
    int smoothness_hint = 2;
};

/// Near-identity start: inner splines are the Greville ramp 0 -> 1 (scaled by
/// 1/d in additive nodes) plus seeded uniform noise, outer splines are the
/// identity and normalizers map [0,1] onto itself.
KanModel init_model(int d, std::span<const AggregationKind> kinds, const InitOptions& options,
                    std::uint64_t seed);

KanModel init_model(int d, int q, std::span<const AggregationKind> kinds, int degree,
                    int interior_count, std::uint64_t seed);

/// Node kinds for an architecture name: "additive" gives q additive nodes,
/// "hybrid" gives floor(q/2) additive nodes followed by ceil(q/2)
/// multiplicative ones.
std::vector<AggregationKind> architecture_kinds(std::string_view architecture, int q);

class ModelFormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kModelFormatVersion = 1;

/// JSON text; numbers are written with 17 significant digits.
std::string serialize_model(const KanModel& model);

/// Throws ModelFormatError naming the offending field.
KanModel deserialize_model(std::string_view text);

void save_model(const KanModel& model, const std::string& path);
KanModel load_model(const std::string& path);

}  // namespace kanrate
