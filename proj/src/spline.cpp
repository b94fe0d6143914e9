#include "kanrate/spline.hpp"

#include "kanrate/banded.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace kanrate {

namespace {

void require_unit(double x, const char* what) {
    if (!(x >= 0.0 && x <= 1.0)) {
        throw std::domain_error(std::string(what) + ": x = " + std::to_string(x) +
                                " is outside [0,1]");
    }
}

// Cox-de Boor triangle for the degree+1 functions B_{span-degree..span, degree}
// that can be nonzero on knot span `span`. Denominators are knot differences
// t_{i+k} - t_i over a non-empty span, so none of them vanish here.
void basis_funs(const std::vector<double>& t, std::size_t span, double x, int degree,
                double* out) {
    double left[32];
    double right[32];
    out[0] = 1.0;
    for (int j = 1; j <= degree; ++j) {
        left[j] = x - t[span + 1 - j];
        right[j] = t[span + j] - x;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            const double temp = out[r] / (right[r + 1] + left[j - r]);
            out[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        out[j] = saved;
    }
}

constexpr int kMaxDegree = 30;

}  // namespace

KnotVector::KnotVector(int interior_count, int degree)
    : degree_(degree), interior_count_(interior_count) {
    if (degree < 0 || interior_count < 0) {
        throw std::invalid_argument("KnotVector: degree and interior_count must be >= 0");
    }
    if (degree > kMaxDegree) {
        throw std::invalid_argument("KnotVector: degree above " + std::to_string(kMaxDegree));
    }
    knots_.reserve(static_cast<std::size_t>(interior_count + 2 * (degree + 1)));
    knots_.insert(knots_.end(), static_cast<std::size_t>(degree + 1), 0.0);
    const double spans = static_cast<double>(interior_count + 1);
    for (int i = 1; i <= interior_count; ++i) knots_.push_back(static_cast<double>(i) / spans);
    knots_.insert(knots_.end(), static_cast<std::size_t>(degree + 1), 1.0);
}

std::size_t KnotVector::find_span(double x) const {
    const auto p = static_cast<std::size_t>(degree_);
    const auto last = static_cast<std::size_t>(interior_count_) + p;
    if (x >= 1.0) return last;
    // Largest s with t_s <= x among the non-empty spans p..last.
    const auto begin = knots_.begin() + static_cast<std::ptrdiff_t>(p);
    const auto end = knots_.begin() + static_cast<std::ptrdiff_t>(last + 1);
    const auto it = std::upper_bound(begin, end, x);
    return static_cast<std::size_t>(it - knots_.begin()) - 1;
}

KnotVector build_clamped_knots(int interior_count, int degree) {
    return KnotVector(interior_count, degree);
}

LocalBasis eval_basis_local(const KnotVector& knots, double x) {
    require_unit(x, "eval_basis");
    LocalBasis out;
    const std::size_t span = knots.find_span(x);
    out.first = span - static_cast<std::size_t>(knots.degree());
    out.values.resize(static_cast<std::size_t>(knots.degree()) + 1);
    basis_funs(knots.knots(), span, x, knots.degree(), out.values.data());
    return out;
}

std::vector<double> eval_basis(const KnotVector& knots, double x) {
    const LocalBasis local = eval_basis_local(knots, x);
    std::vector<double> all(knots.dimension(), 0.0);
    std::copy(local.values.begin(), local.values.end(),
              all.begin() + static_cast<std::ptrdiff_t>(local.first));
    return all;
}

SplineFunction::SplineFunction(KnotVector basis, std::vector<double> coefficients)
    : basis_(std::move(basis)), coefficients_(std::move(coefficients)) {
    if (coefficients_.size() != basis_.dimension()) {
        throw std::invalid_argument("SplineFunction: expected " +
                                    std::to_string(basis_.dimension()) + " coefficients, got " +
                                    std::to_string(coefficients_.size()));
    }
}

double SplineFunction::operator()(double x) const {
    require_unit(x, "eval_spline");
    const int p = basis_.degree();
    const std::size_t span = basis_.find_span(x);
    double values[kMaxDegree + 1];
    basis_funs(basis_.knots(), span, x, p, values);
    const std::size_t first = span - static_cast<std::size_t>(p);
    double s = 0.0;
    for (int k = 0; k <= p; ++k) s += coefficients_[first + static_cast<std::size_t>(k)] * values[k];
    return s;
}

double eval_spline(const SplineFunction& f, double x) { return f(x); }

double eval_spline_derivative(const SplineFunction& f, double x) {
    require_unit(x, "eval_spline_derivative");
    const int p = f.degree();
    if (p < 1) throw std::invalid_argument("eval_spline_derivative: degree 0 is not differentiable");
    const auto& t = f.basis().knots();
    const auto& c = f.coefficients();
    const std::size_t span = f.basis().find_span(x);
    // f' = sum_k p (c_k - c_{k-1}) / (t_{k+p} - t_k) B_{k,p-1}, with the
    // degree p-1 functions taken on the same knot sequence.
    double lower[kMaxDegree + 1];
    basis_funs(t, span, x, p - 1, lower);
    double s = 0.0;
    const std::size_t k0 = span - static_cast<std::size_t>(p) + 1;
    for (int m = 0; m < p; ++m) {
        const std::size_t k = k0 + static_cast<std::size_t>(m);
        const double h = t[k + static_cast<std::size_t>(p)] - t[k];
        s += p * (c[k] - c[k - 1]) / h * lower[m];
    }
    return s;
}

SplineFunction identity_spline(const KnotVector& knots, double scale) {
    // Greville abscissae: mean of t_{i+1..i+p}. For p = 0 use span midpoints.
    const int p = knots.degree();
    const auto& t = knots.knots();
    std::vector<double> c(knots.dimension());
    for (std::size_t i = 0; i < c.size(); ++i) {
        double g = 0.0;
        if (p == 0) {
            g = 0.5 * (t[i] + t[i + 1]);
        } else {
            for (int k = 1; k <= p; ++k) g += t[i + static_cast<std::size_t>(k)];
            g /= p;
        }
        c[i] = scale * g;
    }
    return SplineFunction(knots, std::move(c));
}

SplineFunction constant_spline(const KnotVector& knots, double value) {
    return SplineFunction(knots, std::vector<double>(knots.dimension(), value));
}

DesignMatrix::DesignMatrix(const KnotVector& knots, std::span<const double> xs)
    : cols_(knots.dimension()),
      width_(static_cast<std::size_t>(knots.degree()) + 1),
      first_(xs.size()),
      values_(xs.size() * width_) {
    for (std::size_t i = 0; i < xs.size(); ++i) {
        require_unit(xs[i], "DesignMatrix");
        const std::size_t span = knots.find_span(xs[i]);
        first_[i] = span - static_cast<std::size_t>(knots.degree());
        basis_funs(knots.knots(), span, xs[i], knots.degree(), values_.data() + i * width_);
    }
}

double DesignMatrix::operator()(std::size_t row, std::size_t col) const {
    const std::size_t f = first_[row];
    if (col < f || col >= f + width_) return 0.0;
    return values_[row * width_ + (col - f)];
}

double DesignMatrix::apply(std::size_t row, std::span<const double> coefficients) const {
    const std::size_t f = first_[row];
    const double* v = values_.data() + row * width_;
    double s = 0.0;
    for (std::size_t k = 0; k < width_; ++k) s += v[k] * coefficients[f + k];
    return s;
}

SplineFit fit_spline_ls(std::span<const double> xs,
                        std::span<const double> ys,
                        std::optional<std::span<const double>> weights,
                        const KnotVector& knots,
                        double ridge) {
    const std::size_t n = xs.size();
    if (n == 0) throw std::invalid_argument("fit_spline_ls: empty data");
    if (ys.size() != n) throw std::invalid_argument("fit_spline_ls: xs and ys differ in length");
    if (weights && weights->size() != n) {
        throw std::invalid_argument("fit_spline_ls: weights differ in length from xs");
    }
    if (!(ridge >= 0.0) || !std::isfinite(ridge)) {
        throw std::invalid_argument("fit_spline_ls: ridge must be finite and >= 0");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(xs[i]) || !std::isfinite(ys[i]) ||
            (weights && (!std::isfinite((*weights)[i]) || (*weights)[i] < 0.0))) {
            throw std::invalid_argument("fit_spline_ls: non-finite or negative input at index " +
                                        std::to_string(i));
        }
    }

    const DesignMatrix design(knots, xs);
    const std::size_t dim = knots.dimension();
    const std::size_t band = static_cast<std::size_t>(knots.degree());
    BandedSpdMatrix gram(dim, band);
    std::vector<double> rhs(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double w = weights ? (*weights)[i] : 1.0;
        if (w == 0.0) continue;
        const std::size_t f = design.first(i);
        const auto row = design.row_values(i);
        for (std::size_t a = 0; a < row.size(); ++a) {
            const double wa = w * row[a];
            rhs[f + a] += wa * ys[i];
            for (std::size_t b = 0; b <= a; ++b) gram.add(f + a, f + b, wa * row[b]);
        }
    }

    auto solve = [&](double lambda, bool strict) -> std::optional<std::vector<double>> {
        BandedSpdMatrix a = gram;
        a.add_to_diagonal(lambda);
        // Without a ridge, treat relatively tiny pivots as rank deficiency
        // (basis functions with no or almost no sample support).
        const double floor = strict ? 1e-13 * std::max(a.max_diagonal(), 1e-300) : 0.0;
        if (!a.factorize(floor)) return std::nullopt;
        std::vector<double> c = rhs;
        a.solve_in_place(c);
        for (double v : c) {
            if (!std::isfinite(v)) return std::nullopt;
        }
        return c;
    };

    SplineFit out;
    out.ridge = ridge;
    auto coeffs = solve(ridge, ridge == 0.0);
    if (!coeffs) {
        out.ridge = std::max(ridge, kFallbackRidge);
        out.ridge_fallback = true;
        coeffs = solve(out.ridge, false);
        if (!coeffs) throw std::runtime_error("fit_spline_ls: normal system is not positive definite");
    }
    out.spline = SplineFunction(knots, std::move(*coeffs));
    return out;
}

int knot_count_rule(long long n, int r, double c) {
    if (n < 1 || r < 1 || !(c > 0.0)) {
        throw std::invalid_argument("knot_count_rule: requires n >= 1, r >= 1, c > 0");
    }
    const double k = c * std::pow(static_cast<double>(n), 1.0 / (2.0 * r + 1.0));
    return static_cast<int>(std::max(1LL, std::llround(k)));
}

}  // namespace kanrate
