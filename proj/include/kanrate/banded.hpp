// Symmetric positive-definite banded matrices with an in-place Cholesky
// factorization. Only the lower band is stored.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace kanrate {

class BandedSpdMatrix {
public:
    BandedSpdMatrix(std::size_t size, std::size_t half_bandwidth);

    std::size_t size() const { return size_; }
    std::size_t half_bandwidth() const { return band_; }

    /// Adds v to entry (i, j) and, implicitly, (j, i). Requires |i - j| <= band.
    void add(std::size_t i, std::size_t j, double v);
    double get(std::size_t i, std::size_t j) const;
    void add_to_diagonal(double v);

    /// Replaces the stored band with its Cholesky factor L (A = L L^T).
    /// Returns false if a pivot is not strictly greater than `pivot_floor`;
    /// the matrix contents are then unspecified.
    bool factorize(double pivot_floor = 0.0);

    /// Solves A x = b in place using the factor. Requires a prior successful
    /// factorize().
    void solve_in_place(std::span<double> rhs) const;

    double max_diagonal() const;

private:
    double& at(std::size_t i, std::size_t j) { return data_[i * (band_ + 1) + (i - j)]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * (band_ + 1) + (i - j)]; }

    std::size_t size_;
    std::size_t band_;
    // Row i holds A(i, i), A(i, i-1), ..., A(i, i-band).
    std::vector<double> data_;
    bool factored_ = false;
};

}  // namespace kanrate
