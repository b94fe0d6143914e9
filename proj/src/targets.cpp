#include "kanrate/targets.hpp"

#include "kanrate/rng.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>

namespace kanrate {

namespace {

void require_unit(double x, const char* what) {
    if (!(x >= 0.0 && x <= 1.0)) {
        throw std::domain_error(std::string(what) + ": argument " + std::to_string(x) +
                                " is outside [0,1]");
    }
}

void require_r(int r) {
    if (r < 1) throw std::invalid_argument("smoothness r must be >= 1");
}

}  // namespace

std::string_view to_string(TargetKind kind) {
    return kind == TargetKind::PiecewisePoly ? "piecewise-poly" : "fourier";
}

TargetKind parse_target_kind(std::string_view text) {
    if (text == "piecewise-poly") return TargetKind::PiecewisePoly;
    if (text == "fourier") return TargetKind::FourierSeries;
    throw std::invalid_argument("unknown target '" + std::string(text) +
                                "' (expected piecewise-poly or fourier)");
}

void TargetSpec::validate() const {
    require_r(r);
    if (d < 1) throw std::invalid_argument("target dimension d must be >= 1");
    if (kind == TargetKind::FourierSeries) {
        if (d != 1) throw std::invalid_argument("the fourier target requires d = 1");
        if (fourier_truncation < 1) throw std::invalid_argument("fourier truncation must be >= 1");
    }
}

double eval_psi_piecewise(double t, int r) {
    require_unit(t, "eval_psi_piecewise");
    require_r(r);
    return t < 0.5 ? std::pow(t, r + 1) : std::pow(1.0 - t, r + 1);
}

double eval_target_poly(std::span<const double> x, int r) {
    double s = 0.0;
    for (double v : x) s += eval_psi_piecewise(v, r);
    return std::sin(std::numbers::pi * s);
}

double fourier_coefficient(long long k, int r) {
    if (k < 1) throw std::invalid_argument("fourier_coefficient: k must be >= 1");
    require_r(r);
    const double kd = static_cast<double>(k);
    return 1.0 / (std::pow(kd, r + 0.5) * std::log(kd + 1.0));
}

namespace {

// sin(2 pi k x) with the phase reduced to [-1/2, 1/2) first.
double sin_cycle(long long k, double x) {
    const double phase = static_cast<double>(k) * x;
    double frac = phase - std::floor(phase);
    if (frac >= 0.5) frac -= 1.0;
    return std::sin(2.0 * std::numbers::pi * frac);
}

}  // namespace

double eval_target_fourier(double x, int r, int truncation) {
    require_unit(x, "eval_target_fourier");
    if (truncation < 1) throw std::invalid_argument("eval_target_fourier: truncation must be >= 1");
    double s = 0.0;
    for (long long k = 1; k <= truncation; ++k) s += fourier_coefficient(k, r) * sin_cycle(k, x);
    return s;
}

Target::Target(const TargetSpec& spec) : spec_(spec) {
    spec_.validate();
    if (spec_.kind == TargetKind::FourierSeries) {
        coefficients_.resize(static_cast<std::size_t>(spec_.fourier_truncation));
        for (std::size_t k = 0; k < coefficients_.size(); ++k) {
            coefficients_[k] = fourier_coefficient(static_cast<long long>(k) + 1, spec_.r);
        }
    }
}

double Target::operator()(std::span<const double> x) const {
    if (x.size() != static_cast<std::size_t>(spec_.d)) {
        throw std::invalid_argument("target: point has " + std::to_string(x.size()) +
                                    " coordinates, expected " + std::to_string(spec_.d));
    }
    if (spec_.kind == TargetKind::PiecewisePoly) return eval_target_poly(x, spec_.r);
    require_unit(x[0], "target");
    double s = 0.0;
    for (std::size_t k = 0; k < coefficients_.size(); ++k) {
        s += coefficients_[k] * sin_cycle(static_cast<long long>(k) + 1, x[0]);
    }
    return s;
}

Dataset::Dataset(int d, std::vector<double> x, std::vector<double> y, std::optional<double> noise_sigma)
    : d_(d), x_(std::move(x)), y_(std::move(y)), noise_sigma_(noise_sigma) {
    if (d_ < 1) throw std::invalid_argument("Dataset: dimension must be >= 1");
    if (y_.empty()) throw std::invalid_argument("Dataset: needs at least one sample");
    if (x_.size() != y_.size() * static_cast<std::size_t>(d_)) {
        throw std::invalid_argument("Dataset: input matrix does not have n x d entries");
    }
    for (std::size_t i = 0; i < x_.size(); ++i) {
        if (!(x_[i] >= 0.0 && x_[i] <= 1.0)) {
            throw std::invalid_argument("Dataset: input in row " + std::to_string(i / static_cast<std::size_t>(d_)) +
                                        " is outside [0,1]");
        }
    }
    for (std::size_t i = 0; i < y_.size(); ++i) {
        if (!std::isfinite(y_[i])) {
            throw std::invalid_argument("Dataset: non-finite response in row " + std::to_string(i));
        }
    }
}

std::vector<double> Dataset::column(std::size_t j) const {
    std::vector<double> out(size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x(i, j);
    return out;
}

std::vector<double> uniform_points(int d, std::size_t count, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> out(count * static_cast<std::size_t>(d));
    for (auto& v : out) v = rng.uniform();
    return out;
}

Dataset generate(const TargetSpec& spec, const GenConfig& cfg) {
    spec.validate();
    if (cfg.n < 1) throw std::invalid_argument("generate: n must be >= 1");
    if (!(cfg.sigma >= 0.0) || !std::isfinite(cfg.sigma)) {
        throw std::invalid_argument("generate: sigma must be finite and >= 0");
    }
    const Target target(spec);
    const auto n = static_cast<std::size_t>(cfg.n);
    std::vector<double> x = uniform_points(spec.d, n, derive_seed(cfg.seed, "inputs"));
    std::vector<double> y(n);
    Rng noise(derive_seed(cfg.seed, "noise"));
    const auto d = static_cast<std::size_t>(spec.d);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = target(std::span<const double>(x.data() + i * d, d));
        if (cfg.sigma > 0.0) y[i] += cfg.sigma * noise.normal();
    }
    return Dataset(spec.d, std::move(x), std::move(y), cfg.sigma);
}

// ---------------------------------------------------------------------------
// CSV

std::string dataset_to_csv(const Dataset& data) {
    std::string out;
    for (int j = 1; j <= data.dimension(); ++j) out += "x" + std::to_string(j) + ",";
    out += "y\n";
    char buf[40];
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (int j = 0; j < data.dimension(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g,", data.x(i, static_cast<std::size_t>(j)));
            out += buf;
        }
        std::snprintf(buf, sizeof buf, "%.17g\n", data.responses()[i]);
        out += buf;
    }
    return out;
}

void write_dataset(const std::string& path, const Dataset& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << dataset_to_csv(data);
    if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

}  // namespace

Dataset dataset_from_csv(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line)) throw DatasetFormatError("dataset: empty file (missing header)");
    const auto header = split_commas(line);
    if (header.size() < 2) throw DatasetFormatError("dataset: header needs at least x1,y");
    const std::size_t d = header.size() - 1;
    for (std::size_t j = 0; j < d; ++j) {
        if (trim(header[j]) != "x" + std::to_string(j + 1)) {
            throw DatasetFormatError("dataset: header column " + std::to_string(j + 1) + " must be 'x" +
                                     std::to_string(j + 1) + "'");
        }
    }
    if (trim(header[d]) != "y") throw DatasetFormatError("dataset: last header column must be 'y'");

    std::vector<double> x, y;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split_commas(line);
        if (fields.size() != d + 1) {
            throw DatasetFormatError("dataset: line " + std::to_string(line_no) + " has " +
                                     std::to_string(fields.size()) + " columns, expected " +
                                     std::to_string(d + 1));
        }
        for (std::size_t j = 0; j <= d; ++j) {
            const std::string field(trim(fields[j]));
            char* end = nullptr;
            const double v = std::strtod(field.c_str(), &end);
            if (field.empty() || end != field.c_str() + field.size() || !std::isfinite(v)) {
                throw DatasetFormatError("dataset: line " + std::to_string(line_no) + ", column " +
                                         std::to_string(j + 1) + ": '" + field + "' is not a finite number");
            }
            if (j < d && !(v >= 0.0 && v <= 1.0)) {
                throw DatasetFormatError("dataset: line " + std::to_string(line_no) + ", column " +
                                         std::to_string(j + 1) + ": input outside [0,1]");
            }
            (j < d ? x : y).push_back(v);
        }
    }
    if (y.empty()) throw DatasetFormatError("dataset: no data rows");
    return Dataset(static_cast<int>(d), std::move(x), std::move(y));
}

Dataset read_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetFormatError("dataset: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return dataset_from_csv(buf.str());
}

}  // namespace kanrate
