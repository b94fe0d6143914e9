// Synthetic regression targets of prescribed Sobolev smoothness and the data
// sets drawn from them.
//
//   piecewise polynomial:  f(x) = sin(pi * sum_j psi(x_j)),
//                          psi(t) = t^(r+1) on [0, 1/2), (1-t)^(r+1) on [1/2, 1]
//   Fourier series (d=1):  f(x) = sum_k a_k sin(2 pi k x),
//                          a_k = 1 / (k^(r+1/2) ln(k+1))

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace kanrate {

enum class TargetKind { PiecewisePoly, FourierSeries };

std::string_view to_string(TargetKind kind);
/// "piecewise-poly" or "fourier".
TargetKind parse_target_kind(std::string_view text);

struct TargetSpec {
    TargetKind kind = TargetKind::PiecewisePoly;
    int r = 2;
    int d = 5;
    int fourier_truncation = 1000;

    /// Throws std::invalid_argument for inconsistent settings.
    void validate() const;
};

struct GenConfig {
    long long n = 100;
    double sigma = 0.05;
    std::uint64_t seed = 0;
};

double eval_psi_piecewise(double t, int r);
double eval_target_poly(std::span<const double> x, int r);
double fourier_coefficient(long long k, int r);
double eval_target_fourier(double x, int r, int truncation);

/// Noiseless target with precomputed Fourier coefficients.
class Target {
public:
    explicit Target(const TargetSpec& spec);

    const TargetSpec& spec() const { return spec_; }
    int dimension() const { return spec_.d; }
    double operator()(std::span<const double> x) const;

private:
    TargetSpec spec_;
    std::vector<double> coefficients_;
};

/// Inputs in [0,1]^d stored row-major with responses.
class Dataset {
public:
    Dataset() = default;
    /// Validates shape, finiteness and the [0,1] input range; throws
    /// std::invalid_argument.
    Dataset(int d, std::vector<double> x, std::vector<double> y,
            std::optional<double> noise_sigma = std::nullopt);

    int dimension() const { return d_; }
    std::size_t size() const { return y_.size(); }
    std::span<const double> row(std::size_t i) const {
        return {x_.data() + i * static_cast<std::size_t>(d_), static_cast<std::size_t>(d_)};
    }
    double x(std::size_t i, std::size_t j) const { return x_[i * static_cast<std::size_t>(d_) + j]; }
    const std::vector<double>& inputs() const { return x_; }
    const std::vector<double>& responses() const { return y_; }
    std::optional<double> noise_sigma() const { return noise_sigma_; }

    /// Column j of the inputs.
    std::vector<double> column(std::size_t j) const;

    bool operator==(const Dataset& other) const = default;

private:
    int d_ = 0;
    std::vector<double> x_;
    std::vector<double> y_;
    std::optional<double> noise_sigma_;
};

/// Uniform inputs and Gaussian noise from seeded streams.
Dataset generate(const TargetSpec& spec, const GenConfig& cfg);

/// Uniform points in [0,1]^d, row-major.
std::vector<double> uniform_points(int d, std::size_t count, std::uint64_t seed);

class DatasetFormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// CSV with header x1,...,xd,y and 17 significant digits.
void write_dataset(const std::string& path, const Dataset& data);
std::string dataset_to_csv(const Dataset& data);
/// Throws DatasetFormatError naming the offending line.
Dataset read_dataset(const std::string& path);
Dataset dataset_from_csv(std::string_view text);

}  // namespace kanrate
