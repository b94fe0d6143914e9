#include "kanrate/banded.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>

namespace kanrate {

BandedSpdMatrix::BandedSpdMatrix(std::size_t size, std::size_t half_bandwidth)
    : size_(size), band_(half_bandwidth), data_(size * (half_bandwidth + 1), 0.0) {}

void BandedSpdMatrix::add(std::size_t i, std::size_t j, double v) {
    if (i < j) std::swap(i, j);
    assert(i - j <= band_);
    at(i, j) += v;
}

double BandedSpdMatrix::get(std::size_t i, std::size_t j) const {
    if (i < j) std::swap(i, j);
    if (i - j > band_) return 0.0;
    return at(i, j);
}

void BandedSpdMatrix::add_to_diagonal(double v) {
    for (std::size_t i = 0; i < size_; ++i) at(i, i) += v;
}

double BandedSpdMatrix::max_diagonal() const {
    double m = 0.0;
    for (std::size_t i = 0; i < size_; ++i) m = std::max(m, at(i, i));
    return m;
}

bool BandedSpdMatrix::factorize(double pivot_floor) {
    for (std::size_t j = 0; j < size_; ++j) {
        const std::size_t k0 = j > band_ ? j - band_ : 0;
        double d = at(j, j);
        for (std::size_t k = k0; k < j; ++k) d -= at(j, k) * at(j, k);
        if (!(d > pivot_floor) || !std::isfinite(d)) return false;
        const double ljj = std::sqrt(d);
        at(j, j) = ljj;
        const std::size_t i_end = std::min(size_, j + band_ + 1);
        for (std::size_t i = j + 1; i < i_end; ++i) {
            const std::size_t m0 = i > band_ ? i - band_ : 0;
            double s = at(i, j);
            for (std::size_t k = std::max(m0, k0); k < j; ++k) s -= at(i, k) * at(j, k);
            at(i, j) = s / ljj;
        }
    }
    factored_ = true;
    return true;
}

void BandedSpdMatrix::solve_in_place(std::span<double> rhs) const {
    if (!factored_) throw std::logic_error("BandedSpdMatrix: solve before factorize");
    if (rhs.size() != size_) throw std::invalid_argument("BandedSpdMatrix: rhs size mismatch");
    // L y = b
    for (std::size_t i = 0; i < size_; ++i) {
        const std::size_t k0 = i > band_ ? i - band_ : 0;
        double s = rhs[i];
        for (std::size_t k = k0; k < i; ++k) s -= at(i, k) * rhs[k];
        rhs[i] = s / at(i, i);
    }
    // L^T x = y
    for (std::size_t ii = size_; ii-- > 0;) {
        const std::size_t k_end = std::min(size_, ii + band_ + 1);
        double s = rhs[ii];
        for (std::size_t k = ii + 1; k < k_end; ++k) s -= at(k, ii) * rhs[k];
        rhs[ii] = s / at(ii, ii);
    }
}

}  // namespace kanrate
