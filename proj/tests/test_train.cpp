#include "kanrate/rng.hpp"
#include "kanrate/train.hpp"

#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

using namespace kanrate;

namespace {

KanNode identity_node(int d, AggregationKind kind, int degree, int interior) {
    const KnotVector knots(interior, degree);
    KanNode node;
    node.kind = kind;
    for (int j = 0; j < d; ++j) node.inner.push_back(identity_spline(knots, kind == AggregationKind::Additive ? 1.0 / d : 1.0));
    node.outer = identity_spline(knots);
    return node;
}

SplineFunction random_spline(const KnotVector& knots, Rng& rng, double lo, double hi) {
    std::vector<double> c(static_cast<std::size_t>(knots.dimension()));
    for (auto& v : c) v = rng.uniform(lo, hi);
    return SplineFunction(knots, std::move(c));
}

Dataset dataset_from(int d, std::vector<double> x, const std::function<double(std::span<const double>)>& f) {
    const std::size_t n = x.size() / static_cast<std::size_t>(d);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = f(std::span<const double>(x.data() + i * d, static_cast<std::size_t>(d)));
    return Dataset(d, std::move(x), std::move(y));
}

double sup_error(const KanModel& model, const std::function<double(std::span<const double>)>& f, int d,
                 std::uint64_t seed) {
    const auto pts = uniform_points(d, 2000, seed);
    double worst = 0.0;
    for (std::size_t i = 0; i < 2000; ++i) {
        std::span<const double> x(pts.data() + i * d, static_cast<std::size_t>(d));
        worst = std::max(worst, std::abs(model_forward(model, x) - f(x)));
    }
    return worst;
}

double test_mse(const KanModel& model, const std::function<double(std::span<const double>)>& f, int d,
                std::uint64_t seed, std::size_t m = 5000) {
    const auto pts = uniform_points(d, m, seed);
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        std::span<const double> x(pts.data() + i * d, static_cast<std::size_t>(d));
        const double e = model_forward(model, x) - f(x);
        s += e * e;
    }
    return s / static_cast<double>(m);
}

// Random cubic model with refreshed normalizers and random inner/outer splines.
KanModel random_model(int d, std::span<const AggregationKind> kinds, Rng& rng, const Dataset& shape) {
    const KnotVector knots(3, 3);
    std::vector<KanNode> nodes;
    for (auto kind : kinds) {
        KanNode node;
        node.kind = kind;
        for (int j = 0; j < d; ++j) node.inner.push_back(random_spline(knots, rng, -1.0, 1.0));
        node.outer = random_spline(knots, rng, -1.0, 1.0);
        node.normalizer = refresh_normalizer(node, shape, 0.05);
        nodes.push_back(std::move(node));
    }
    return KanModel(d, std::move(nodes));
}

}  // namespace

TEST_CASE("TrainConfig validation") {
    TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.max_sweeps = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.deriv_floor = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.inner_knot_count = -1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("partial_residual") {
    const auto kinds = architecture_kinds("additive", 3);
    Rng rng(21);
    const Dataset data = generate({TargetKind::PiecewisePoly, 2, 2, 1000}, {60, 0.05, 2});
    SUBCASE("single node") {
        const KanModel model = init_model(2, std::span(kinds).first(1), InitOptions{}, 4);
        CHECK(partial_residual(model, data, 0) == data.responses());
    }
    SUBCASE("zero partner node") {
        KanModel model = init_model(2, std::span(kinds).first(2), InitOptions{}, 4);
        KanNode zero = model.node(1);
        zero.outer = constant_spline(zero.outer.basis(), 0.0);
        model.set_node(1, zero);
        CHECK(partial_residual(model, data, 0) == data.responses());
    }
    SUBCASE("algebraic identity") {
        const KanModel model = random_model(2, kinds, rng, data);
        for (std::size_t q = 0; q < 3; ++q) {
            const auto r = partial_residual(model, data, q);
            for (std::size_t i = 0; i < data.size(); ++i) {
                double others = 0.0;
                for (std::size_t k = 0; k < 3; ++k) {
                    if (k != q) others += node_forward(model.node(k), data.row(i));
                }
                CHECK(r[i] + others == doctest::Approx(data.responses()[i]).epsilon(1e-14));
            }
        }
        CHECK_THROWS_AS(partial_residual(model, data, 3), std::out_of_range);
    }
}

TEST_CASE("training_mse") {
    const Dataset data = generate({TargetKind::PiecewisePoly, 2, 2, 1000}, {80, 0.05, 6});
    SUBCASE("model on its own data") {
        const auto kinds = architecture_kinds("hybrid", 2);
        Rng rng(5);
        const KanModel model = random_model(2, kinds, rng, data);
        const Dataset own = dataset_from(2, data.inputs(), [&](std::span<const double> x) { return model_forward(model, x); });
        CHECK(training_mse(model, own) <= 1e-20);
    }
    SUBCASE("zero model against unit responses") {
        const auto kinds = architecture_kinds("additive", 1);
        KanModel model = init_model(2, kinds, InitOptions{}, 1);
        KanNode node = model.node(0);
        node.outer = constant_spline(node.outer.basis(), 0.0);
        model.set_node(0, node);
        const Dataset ones(2, data.inputs(), std::vector<double>(data.size(), 1.0));
        CHECK(training_mse(model, ones) == 1.0);
    }
    SUBCASE("independent recomputation") {
        const auto kinds = architecture_kinds("hybrid", 3);
        Rng rng(6);
        const KanModel model = random_model(2, kinds, rng, data);
        double s = 0.0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            double f = 0.0;
            for (const auto& node : model.nodes()) {
                double t = node.kind == AggregationKind::Additive ? 0.0 : 1.0;
                for (std::size_t j = 0; j < 2; ++j) {
                    const double v = eval_spline(node.inner[j], data.x(i, j));
                    t = node.kind == AggregationKind::Additive ? t + v : t * std::clamp(v, -10.0, 10.0);
                }
                const double u = std::clamp((t - node.normalizer.lo()) / node.normalizer.width(), 0.0, 1.0);
                f += eval_spline(node.outer, u);
            }
            s += (data.responses()[i] - f) * (data.responses()[i] - f);
        }
        CHECK(training_mse(model, data) == doctest::Approx(s / static_cast<double>(data.size())).epsilon(1e-13));
    }
}

TEST_CASE("inner_update reduces to univariate least squares") {
    const KanNode node = identity_node(1, AggregationKind::Additive, 3, 4);
    const KanModel model(1, {node});
    const Dataset data = dataset_from(1, uniform_points(1, 300, 3), [](std::span<const double> x) {
        return 0.5 + 0.3 * std::sin(2.0 * std::numbers::pi * x[0]);
    });
    TrainConfig cfg;
    const auto residual = partial_residual(model, data, 0);
    const InnerUpdate up = inner_update(node, data, residual, 0, cfg);
    CHECK_FALSE(up.skipped);
    const auto xs = data.column(0);
    const SplineFit direct = fit_spline_ls(xs, data.responses(), std::nullopt, node.inner[0].basis(), cfg.ridge);
    REQUIRE(up.spline.coefficients().size() == direct.spline.coefficients().size());
    for (std::size_t k = 0; k < direct.spline.coefficients().size(); ++k) {
        CHECK(std::abs(up.spline.coefficients()[k] - direct.spline.coefficients()[k]) < 1e-12);
    }
    CHECK_THROWS_AS(inner_update(node, data, residual, 1, cfg), std::out_of_range);
}

TEST_CASE("inner_system with outer slope two") {
    KanNode node = identity_node(2, AggregationKind::Additive, 3, 3);
    node.outer = identity_spline(node.outer.basis(), 2.0);
    const Dataset data = generate({TargetKind::PiecewisePoly, 2, 2, 1000}, {100, 0.05, 8});
    std::vector<double> residual(data.responses());
    TrainConfig cfg;
    const InnerSystem sys = inner_system(node, data, residual, 1, cfg);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double psi = node.inner[1](data.x(i, 1));
        const double g = node_forward(node, data.row(i));
        CHECK(sys.weights[i] == doctest::Approx(4.0).epsilon(1e-12));
        CHECK(sys.pseudo_response[i] == doctest::Approx(psi + (residual[i] - g) / 2.0).epsilon(1e-12));
    }
}

TEST_CASE("multiplicative node with a zero partner") {
    KanNode node = identity_node(2, AggregationKind::Multiplicative, 3, 3);
    node.inner[1] = constant_spline(node.inner[1].basis(), 0.0);
    const Dataset data = generate({TargetKind::PiecewisePoly, 2, 2, 1000}, {200, 0.05, 9});
    TrainConfig cfg;
    const InnerSystem sys = inner_system(node, data, data.responses(), 0, cfg);
    for (double w : sys.weights) CHECK(w == cfg.deriv_floor * cfg.deriv_floor);

    const KanModel model(2, {node});
    cfg.max_sweeps = 3;
    cfg.freeze_normalizers = true;
    cfg.update_outer = false;
    const FitResult res = fit(model, data, cfg);
    double prev = res.trace.initial_mse;
    for (double m : res.trace.mse) {
        CHECK(m <= prev);
        prev = m;
    }
}

TEST_CASE("outer refit does not increase the residual sum of squares") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const auto kinds = architecture_kinds(trial % 2 ? "hybrid" : "additive", 2);
        const Dataset data = generate({TargetKind::PiecewisePoly, 2, 3, 1000}, {150, 0.05, static_cast<std::uint64_t>(trial)});
        const KanModel model = random_model(3, kinds, rng, data);
        const auto residual = partial_residual(model, data, 0);
        const SplineFit refit = outer_update(model.node(0), data, residual, TrainConfig{});
        KanNode updated = model.node(0);
        updated.outer = refit.spline;
        double before = 0.0, after = 0.0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            before += std::pow(residual[i] - node_forward(model.node(0), data.row(i)), 2);
            after += std::pow(residual[i] - node_forward(updated, data.row(i)), 2);
        }
        CHECK(after <= before * (1.0 + 1e-9) + 1e-12);
    }
}

TEST_CASE("frozen-normalizer sweeps are monotone") {
    Rng rng(41);
    for (int trial = 0; trial < 10; ++trial) {
        const auto kinds = architecture_kinds(trial % 2 ? "hybrid" : "additive", 2);
        const Dataset data = generate({TargetKind::PiecewisePoly, 2, 2, 1000}, {200, 0.05, static_cast<std::uint64_t>(100 + trial)});
        const KanModel model = random_model(2, kinds, rng, data);
        TrainConfig cfg;
        cfg.freeze_normalizers = true;
        cfg.max_sweeps = 8;
        cfg.tol = 0.0;
        const FitResult res = fit(model, data, cfg);
        double prev = res.trace.initial_mse;
        for (double m : res.trace.mse) {
            CHECK(m <= prev + 1e-6 * (1.0 + m));
            prev = m;
        }
        CHECK(res.trace.nonmonotone_sweeps == 0);
        CHECK(res.trace.mse.size() <= static_cast<std::size_t>(cfg.max_sweeps));
    }
}

TEST_CASE("fit is deterministic") {
    const Dataset data = generate({TargetKind::PiecewisePoly, 2, 3, 1000}, {300, 0.05, 77});
    const auto kinds = architecture_kinds("hybrid", 4);
    TrainConfig cfg;
    cfg.max_sweeps = 5;
    const KanModel start = make_initial_model(kinds, data, 2, cfg);
    const FitResult a = fit(start, data, cfg);
    const FitResult b = fit(start, data, cfg);
    CHECK(a.trace.mse == b.trace.mse);
    CHECK(a.model == b.model);
}

TEST_CASE("single fixed-identity node reproduces spline regression") {
    const Dataset data = dataset_from(1, uniform_points(1, 500, 12), [](std::span<const double> x) {
        return 0.5 + 0.3 * std::cos(3.0 * x[0]) * x[0];
    });
    const KanNode node = identity_node(1, AggregationKind::Additive, 3, 6);
    TrainConfig cfg;
    cfg.update_outer = false;
    cfg.freeze_normalizers = true;
    cfg.max_sweeps = 3;
    const FitResult res = fit(KanModel(1, {node}), data, cfg);
    const auto xs = data.column(0);
    const SplineFit direct = fit_spline_ls(xs, data.responses(), std::nullopt, node.inner[0].basis(), cfg.ridge);
    const auto& got = res.model.node(0).inner[0].coefficients();
    for (std::size_t k = 0; k < got.size(); ++k) CHECK(std::abs(got[k] - direct.spline.coefficients()[k]) < 1e-10);
    CHECK(res.model.node(0).outer == node.outer);
}

TEST_CASE("fit recovers a noiseless single-node model") {
    Rng rng(17);
    const int d = 2;
    const KnotVector knots(3, 3);
    KanNode truth = identity_node(d, AggregationKind::Additive, 3, 3);
    for (int j = 0; j < d; ++j) {
        std::vector<double> c = truth.inner[static_cast<std::size_t>(j)].coefficients();
        for (auto& v : c) v += rng.uniform(-0.1, 0.1);
        truth.inner[static_cast<std::size_t>(j)] = SplineFunction(knots, std::move(c));
    }
    const Dataset data_x = dataset_from(d, uniform_points(d, 2000, 18), [](std::span<const double>) { return 0.0; });
    // A normalizer that covers T keeps the generator free of clamping kinks.
    truth.normalizer = refresh_normalizer(truth, data_x, 0.05);
    const KanModel oracle(d, {truth});
    auto f = [&](std::span<const double> x) { return model_forward(oracle, x); };
    const Dataset data = dataset_from(d, data_x.inputs(), f);

    TrainConfig cfg;
    cfg.inner_knot_count = 3;
    cfg.outer_knot_count = 3;
    cfg.seed = 19;
    const auto kinds = architecture_kinds("additive", 1);
    const FitResult res = fit(make_initial_model(kinds, data, 2, cfg), data, cfg);
    CHECK(res.trace.sweeps <= 50);
    CHECK(test_mse(res.model, f, d, 20) < 1e-6);
}

TEST_CASE("constant response") {
    const Dataset base = generate({TargetKind::PiecewisePoly, 2, 3, 1000}, {400, 0.0, 23});
    const Dataset data(3, base.inputs(), std::vector<double>(base.size(), 0.7));
    const std::vector<std::vector<AggregationKind>> architectures{
        {AggregationKind::Additive}, {AggregationKind::Multiplicative}, architecture_kinds("additive", 2)};
    auto constant = [](std::span<const double>) { return 0.7; };
    for (const auto& kinds : architectures) {
        TrainConfig cfg;
        cfg.ridge = 0.0;
        const FitResult exact = fit(make_initial_model(kinds, data, 2, cfg), data, cfg);
        CHECK(sup_error(exact.model, constant, 3, 24) < 1e-8);
        // The default ridge shrinks coefficients by O(ridge).
        cfg.ridge = TrainConfig{}.ridge;
        const FitResult shrunk = fit(make_initial_model(kinds, data, 2, cfg), data, cfg);
        CHECK(sup_error(shrunk.model, constant, 3, 24) < 1e-7);
    }
}

TEST_CASE("more data gives a smaller test error") {
    const TargetSpec spec{TargetKind::PiecewisePoly, 2, 5, 1000};
    const Target target(spec);
    auto f = [&](std::span<const double> x) { return target(x); };
    const auto kinds = architecture_kinds("additive", 4);
    double mse[2];
    int idx = 0;
    for (long long n : {100LL, 1600LL}) {
        const Dataset data = generate(spec, {n, 0.05, 5});
        TrainConfig cfg;
        cfg.seed = 5;
        const FitResult res = fit(make_initial_model(kinds, data, 2, cfg), data, cfg);
        mse[idx++] = test_mse(res.model, f, 5, 99, 20000);
    }
    CHECK(mse[1] < mse[0]);
}

TEST_CASE("fit rejects mismatched dimensions") {
    const Dataset data = generate({TargetKind::PiecewisePoly, 2, 3, 1000}, {50, 0.05, 1});
    const auto kinds = architecture_kinds("additive", 1);
    const KanModel model = init_model(2, kinds, InitOptions{}, 1);
    CHECK_THROWS_AS(fit(model, data, TrainConfig{}), std::invalid_argument);
}
