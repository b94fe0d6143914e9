#include "kanrate/rng.hpp"
#include "kanrate/targets.hpp"

#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

using namespace kanrate;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("kanrate_test_" + name)).string();
}

}  // namespace

TEST_CASE("eval_psi_piecewise") {
    CHECK(eval_psi_piecewise(0.25, 2) == 0.015625);
    CHECK(eval_psi_piecewise(0.5, 2) == 0.125);
    CHECK(eval_psi_piecewise(0.5, 2) == doctest::Approx(std::pow(0.5, 3)));
    for (int r = 1; r <= 5; ++r) CHECK(eval_psi_piecewise(0.0, r) == 0.0);
    CHECK_THROWS_AS(eval_psi_piecewise(1.2, 2), std::domain_error);
    CHECK_THROWS_AS(eval_psi_piecewise(0.2, 0), std::invalid_argument);

    Rng rng(1);
    for (int i = 0; i < 200; ++i) {
        const double t = rng.uniform();
        CHECK(eval_psi_piecewise(t, 2) == doctest::Approx(eval_psi_piecewise(1.0 - t, 2)).epsilon(1e-13));
    }
}

TEST_CASE("piecewise psi is continuous at one half with a first-derivative jump") {
    // The one-sided slopes at t = 1/2 are +-(r+1)/2^r, so psi is continuous but
    // not differentiable there for any r.
    const double h = 1e-7;
    for (int r = 1; r <= 4; ++r) {
        const double at = eval_psi_piecewise(0.5, r);
        CHECK(eval_psi_piecewise(0.5 - 1e-12, r) == doctest::Approx(at).epsilon(1e-10));
        const double left = (at - eval_psi_piecewise(0.5 - h, r)) / h;
        const double right = (eval_psi_piecewise(0.5 + h, r) - at) / h;
        const double slope = (r + 1) / std::pow(2.0, r);
        CHECK(left == doctest::Approx(slope).epsilon(1e-5));
        CHECK(right == doctest::Approx(-slope).epsilon(1e-5));
    }
}

TEST_CASE("eval_target_poly") {
    const std::vector<double> half(5, 0.5);
    CHECK(eval_target_poly(half, 2) == doctest::Approx(std::sin(0.625 * std::numbers::pi)).epsilon(1e-15));
    CHECK(eval_target_poly(half, 2) == doctest::Approx(0.9238795).epsilon(1e-7));
    CHECK(eval_target_poly(std::vector<double>(5, 0.0), 2) == 0.0);
    const std::vector<double> x{0.1, 0.7, 0.3, 0.95, 0.5};
    const std::vector<double> px{0.95, 0.3, 0.5, 0.1, 0.7};
    CHECK(eval_target_poly(x, 2) == doctest::Approx(eval_target_poly(px, 2)).epsilon(1e-15));
    CHECK_THROWS_AS(eval_target_poly(std::vector<double>{0.1, -0.1}, 2), std::domain_error);
}

TEST_CASE("fourier_coefficient") {
    CHECK(fourier_coefficient(1, 2) == doctest::Approx(1.0 / std::log(2.0)).epsilon(1e-15));
    CHECK(fourier_coefficient(1, 2) == doctest::Approx(1.442695).epsilon(1e-6));
    CHECK(fourier_coefficient(2, 2) == doctest::Approx(1.0 / (std::pow(2.0, 2.5) * std::log(3.0))).epsilon(1e-15));
    CHECK(fourier_coefficient(2, 2) == doctest::Approx(0.16090908).epsilon(1e-7));
    for (long long k = 1; k < 2000; ++k) CHECK(fourier_coefficient(k + 1, 2) < fourier_coefficient(k, 2));
    CHECK_THROWS_AS(fourier_coefficient(0, 2), std::invalid_argument);
}

TEST_CASE("eval_target_fourier") {
    for (int r : {1, 2, 3}) {
        CHECK(std::abs(eval_target_fourier(0.0, r, 1000)) < 1e-14);
        CHECK(std::abs(eval_target_fourier(1.0, r, 1000)) < 1e-14);
        CHECK(std::abs(eval_target_fourier(0.5, r, 1000)) < 1e-14);
    }
    // sin(pi k / 2) is 0, 1, 0, -1, ... so f(1/4) = a_1 - a_3 + a_5 - ...
    double oracle = 0.0;
    for (long long k = 1; k <= 1000; k += 2) {
        const double a = 1.0 / (std::pow(static_cast<double>(k), 2.5) * std::log(static_cast<double>(k) + 1.0));
        oracle += ((k - 1) / 2) % 2 == 0 ? a : -a;
    }
    CHECK(std::abs(eval_target_fourier(0.25, 2, 1000) - oracle) < 1e-12);
    CHECK_THROWS_AS(eval_target_fourier(1.5, 2, 1000), std::domain_error);
}

TEST_CASE("fourier truncation tail") {
    double tail = 0.0;
    for (long long k = 1001; k <= 10000; ++k) tail += fourier_coefficient(k, 2);
    // The tail sum is about 2.73e-6.
    CHECK(tail < 3e-6);
    CHECK(tail > 2e-6);
    Rng rng(9);
    for (int i = 0; i < 20; ++i) {
        const double x = rng.uniform();
        const double diff = std::abs(eval_target_fourier(x, 2, 10000) - eval_target_fourier(x, 2, 1000));
        CHECK(diff <= tail + 1e-13);
    }
}

TEST_CASE("fourier target cancels under x -> 1 - x") {
    Rng rng(10);
    const Target target({TargetKind::FourierSeries, 2, 1, 1000});
    for (int i = 0; i < 100; ++i) {
        // Dyadic points keep 1 - x and k x exact.
        const double x = static_cast<double>(rng.next() >> 40) * 0x1.0p-24;
        const double y = 1.0 - x;
        CHECK(std::abs(target(std::span<const double>(&x, 1)) + target(std::span<const double>(&y, 1))) <= 1e-15);
    }
}

TEST_CASE("Target matches the free functions") {
    const Target poly({TargetKind::PiecewisePoly, 2, 3, 1000});
    const std::vector<double> x{0.2, 0.6, 0.9};
    CHECK(poly(x) == eval_target_poly(x, 2));
    const Target fourier({TargetKind::FourierSeries, 2, 1, 1000});
    const std::vector<double> u{0.37};
    CHECK(fourier(u) == doctest::Approx(eval_target_fourier(0.37, 2, 1000)).epsilon(1e-14));
    CHECK_THROWS_AS(Target({TargetKind::FourierSeries, 2, 3, 1000}), std::invalid_argument);
    CHECK_THROWS_AS(poly(u), std::invalid_argument);
}

TEST_CASE("generate") {
    const TargetSpec spec{TargetKind::PiecewisePoly, 2, 5, 1000};
    SUBCASE("noiseless responses equal the target") {
        const Dataset data = generate(spec, {200, 0.0, 3});
        const Target f(spec);
        CHECK(data.size() == 200);
        CHECK(data.dimension() == 5);
        for (std::size_t i = 0; i < data.size(); ++i) CHECK(data.responses()[i] == f(data.row(i)));
    }
    SUBCASE("determinism") {
        CHECK(generate(spec, {300, 0.05, 8}) == generate(spec, {300, 0.05, 8}));
        CHECK_FALSE(generate(spec, {300, 0.05, 8}) == generate(spec, {300, 0.05, 9}));
    }
    SUBCASE("noise variance") {
        const Dataset data = generate(spec, {100000, 0.05, 4});
        const Target f(spec);
        double mean = 0.0;
        std::vector<double> e(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) {
            e[i] = data.responses()[i] - f(data.row(i));
            mean += e[i];
        }
        mean /= static_cast<double>(e.size());
        double var = 0.0;
        for (double v : e) var += (v - mean) * (v - mean);
        var /= static_cast<double>(e.size() - 1);
        CHECK(std::abs(var - 0.0025) < 0.05 * 0.0025);
    }
    SUBCASE("inputs are uniform on the unit cube") {
        const Dataset data = generate(spec, {20000, 0.05, 5});
        for (std::size_t j = 0; j < 5; ++j) {
            const auto col = data.column(j);
            double m = 0.0;
            for (double v : col) m += v;
            m /= static_cast<double>(col.size());
            CHECK(std::abs(m - 0.5) < 0.01);
        }
    }
    SUBCASE("invalid configuration") {
        CHECK_THROWS_AS(generate({TargetKind::FourierSeries, 2, 3, 1000}, {10, 0.05, 1}), std::invalid_argument);
        CHECK_THROWS_AS(generate(spec, {0, 0.05, 1}), std::invalid_argument);
        CHECK_THROWS_AS(generate(spec, {10, -1.0, 1}), std::invalid_argument);
    }
}

TEST_CASE("dataset CSV round trip") {
    const Dataset data = generate({TargetKind::PiecewisePoly, 2, 3, 1000}, {50, 0.05, 12});
    const std::string path = temp_path("roundtrip.csv");
    write_dataset(path, data);
    const Dataset back = read_dataset(path);
    REQUIRE(back.dimension() == 3);
    REQUIRE(back.size() == 50);
    CHECK(back.inputs() == data.inputs());
    CHECK(back.responses() == data.responses());
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "x1,x2,x3,y");
    std::filesystem::remove(path);
}

TEST_CASE("dataset CSV errors") {
    auto expect_error = [](const std::string& text, const std::string& needle) {
        try {
            dataset_from_csv(text);
            FAIL("expected DatasetFormatError for ", needle);
        } catch (const DatasetFormatError& e) {
            CHECK_MESSAGE(std::string(e.what()).find(needle) != std::string::npos, e.what());
        }
    };
    expect_error("x1,x2,y\n0.1,0.2,1\n0.3,0.5\n", "line 3");
    expect_error("x1,x2,y\n0.1,abc,1\n", "line 2, column 2");
    expect_error("x1,z,y\n0.1,0.2,1\n", "header column 2");
    expect_error("x1,y\n1.5,2\n", "outside [0,1]");
    expect_error("x1,y\n", "no data rows");
    expect_error("", "header");
    CHECK_THROWS_AS(read_dataset("/nonexistent/data.csv"), DatasetFormatError);

    const Dataset ok = dataset_from_csv("x1,x2,x3,x4,y\n0.1,0.2,0.3,0.4,5\n");
    CHECK(ok.dimension() == 4);
    CHECK(ok.responses()[0] == 5.0);
}
