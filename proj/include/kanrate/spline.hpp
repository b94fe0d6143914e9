// B-spline bases on [0,1] with clamped uniform knots, evaluation, derivatives
// and weighted least-squares fitting.
//
// A basis of degree p with K interior knots has K + p + 1 functions. The knot
// sequence repeats 0 and 1 each p + 1 times and places the interior knots at
// i / (K + 1). Values are computed with the Cox-de Boor recursion; the
// order-0 indicator of the last non-empty span is closed at x = 1 so the basis
// covers the whole unit interval.

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace kanrate {

class KnotVector {
public:
    KnotVector() = default;

    /// Clamped uniform knots; see build_clamped_knots().
    KnotVector(int interior_count, int degree);

    int degree() const { return degree_; }
    int interior_count() const { return interior_count_; }
    std::size_t dimension() const { return static_cast<std::size_t>(interior_count_ + degree_ + 1); }
    const std::vector<double>& knots() const { return knots_; }
    double operator[](std::size_t i) const { return knots_[i]; }

    /// Index s of the knot span [t_s, t_{s+1}) containing x, with
    /// p <= s <= K + p. At x = 1 the last non-empty span is returned.
    std::size_t find_span(double x) const;

    bool operator==(const KnotVector& other) const = default;

private:
    int degree_ = 0;
    int interior_count_ = 0;
    std::vector<double> knots_;
};

KnotVector build_clamped_knots(int interior_count, int degree);

/// Nonzero basis values at one point: B_{first}, ..., B_{first + p}.
struct LocalBasis {
    std::size_t first = 0;
    std::vector<double> values;
};

/// The p + 1 basis functions that can be nonzero at x. Throws
/// std::domain_error if x is outside [0,1].
LocalBasis eval_basis_local(const KnotVector& knots, double x);

/// All K + p + 1 basis values at x.
std::vector<double> eval_basis(const KnotVector& knots, double x);

class SplineFunction {
public:
    SplineFunction() = default;
    /// Throws std::invalid_argument if the coefficient count differs from the
    /// basis dimension.
    SplineFunction(KnotVector basis, std::vector<double> coefficients);

    const KnotVector& basis() const { return basis_; }
    int degree() const { return basis_.degree(); }
    const std::vector<double>& coefficients() const { return coefficients_; }

    double operator()(double x) const;

    bool operator==(const SplineFunction& other) const = default;

private:
    KnotVector basis_;
    std::vector<double> coefficients_;
};

double eval_spline(const SplineFunction& f, double x);

/// Exact first derivative. Inside a span the polynomial piece is
/// differentiated; at an interior knot the right limit is taken and at x = 1
/// the left limit. Throws std::invalid_argument for degree 0.
double eval_spline_derivative(const SplineFunction& f, double x);

/// Coefficients 0, 1/p, ..., 1 scaled by `scale`; reproduces x -> scale * x
/// exactly for p >= 1 on uniform clamped knots.
SplineFunction identity_spline(const KnotVector& knots, double scale = 1.0);

SplineFunction constant_spline(const KnotVector& knots, double value);

/// Sparse design matrix: row i stores the p + 1 basis values at x_i starting
/// at column first[i].
class DesignMatrix {
public:
    DesignMatrix(const KnotVector& knots, std::span<const double> xs);

    std::size_t rows() const { return first_.size(); }
    std::size_t cols() const { return cols_; }
    std::size_t bandwidth() const { return width_; }
    std::size_t first(std::size_t row) const { return first_[row]; }
    std::span<const double> row_values(std::size_t row) const {
        return {values_.data() + row * width_, width_};
    }
    /// Dense entry (row, col); zero outside the local support.
    double operator()(std::size_t row, std::size_t col) const;

    /// Row-times-coefficients product.
    double apply(std::size_t row, std::span<const double> coefficients) const;

private:
    std::size_t cols_ = 0;
    std::size_t width_ = 0;
    std::vector<std::size_t> first_;
    std::vector<double> values_;
};

struct SplineFit {
    SplineFunction spline;
    /// The ridge that was actually used.
    double ridge = 0.0;
    /// Set when the requested system was singular and the fallback ridge
    /// was applied.
    bool ridge_fallback = false;
};

inline constexpr double kFallbackRidge = 1e-8;

/// Minimizes sum_i w_i (y_i - f(x_i))^2 + ridge * |c|^2 over splines on
/// `knots`. The banded normal system is solved by Cholesky factorization.
/// Throws std::invalid_argument on empty/mismatched or non-finite input and
/// std::domain_error for sites outside [0,1].
SplineFit fit_spline_ls(std::span<const double> xs,
                        std::span<const double> ys,
                        std::optional<std::span<const double>> weights,
                        const KnotVector& knots,
                        double ridge);

/// Interior knot count max(1, round(c * n^(1/(2r+1)))).
int knot_count_rule(long long n, int r, double c = 1.0);

}  // namespace kanrate
