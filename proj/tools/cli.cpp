#include "kanrate/cli.hpp"

#include "kanrate/experiment.hpp"
#include "kanrate/model.hpp"
#include "kanrate/targets.hpp"
#include "kanrate/train.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <optional>
#include <ostream>

namespace kanrate {

namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct GenArgs {
    std::string target = "piecewise-poly";
    int r = 2;
    int d = 5;
    long long n = 0;
    double sigma = 0.05;
    std::uint64_t seed = 0;
    std::string out;
};

struct FitArgs {
    std::string arch = "additive";
    int q = 4;
    int degree = 3;
    int r = 2;
    std::string data;
    std::string model_out;
    double knot_c = 1.0;
    std::uint64_t seed = 0;
    int max_sweeps = 50;
};

struct EvalArgs {
    std::string model;
    std::string data;
    std::string target;
    int r = 2;
    int test_points = 20000;
    std::uint64_t seed = 0;
};

struct ExperimentArgs {
    std::string config;
    std::string out_dir;
    int workers = 1;
};

int cmd_gen(const GenArgs& a, std::ostream& out, std::ostream& err) {
    TargetSpec spec;
    try {
        spec.kind = parse_target_kind(a.target);
        spec.r = a.r;
        spec.d = a.d;
        spec.validate();
    } catch (const std::invalid_argument& e) {
        err << "gen: " << e.what() << "\n";
        return kExitUsage;
    }
    try {
        const Dataset data = generate(spec, {a.n, a.sigma, a.seed});
        write_dataset(a.out, data);
        out << "rows=" << data.size() << " path=" << a.out << "\n";
    } catch (const std::exception& e) {
        err << "gen: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitOk;
}

int cmd_fit(const FitArgs& a, std::ostream& out, std::ostream& err) {
    Dataset data;
    std::vector<AggregationKind> kinds;
    TrainConfig cfg;
    try {
        data = read_dataset(a.data);
        kinds = architecture_kinds(a.arch, a.q);
        cfg.degree = a.degree;
        cfg.knot_c = a.knot_c;
        cfg.seed = a.seed;
        cfg.max_sweeps = a.max_sweeps;
        cfg.validate();
        if (a.r < 1) throw std::invalid_argument("--r must be >= 1");
    } catch (const std::exception& e) {
        err << "fit: " << e.what() << "\n";
        return kExitUsage;
    }
    std::optional<FitResult> result;
    try {
        result = fit(make_initial_model(kinds, data, a.r, cfg), data, cfg);
    } catch (const std::exception& e) {
        err << "fit: training failed: " << e.what() << "\n";
        return kExitTraining;
    }
    try {
        save_model(result->model, a.model_out);
    } catch (const std::exception& e) {
        err << "fit: " << e.what() << "\n";
        return kExitUsage;
    }
    const auto& trace = result->trace;
    if (trace.nonmonotone_sweeps > 0) {
        err << "fit: warning: training MSE increased in " << trace.nonmonotone_sweeps << " sweep(s)\n";
    }
    out << "train_mse=" << num(training_mse(result->model, data)) << " sweeps=" << trace.sweeps << "\n";
    return kExitOk;
}

int cmd_eval(const EvalArgs& a, bool have_data, bool have_target, std::ostream& out, std::ostream& err) {
    if (have_data == have_target) {
        err << "eval: give exactly one of --data or --target\n";
        return kExitUsage;
    }
    try {
        const KanModel model = load_model(a.model);
        double mse = 0.0;
        if (have_data) {
            mse = training_mse(model, read_dataset(a.data));
        } else {
            TargetSpec spec;
            spec.kind = parse_target_kind(a.target);
            spec.r = a.r;
            spec.d = model.dimension();
            mse = estimate_test_mse(model, spec, a.test_points, a.seed);
        }
        out << "mse=" << num(mse) << "\n";
    } catch (const std::exception& e) {
        err << "eval: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitOk;
}

int cmd_experiment(const ExperimentArgs& a, std::ostream& out, std::ostream& err) {
    ExperimentConfig cfg;
    try {
        cfg = load_experiment_config(a.config);
        if (a.workers < 1) throw std::invalid_argument("--workers must be >= 1");
    } catch (const std::exception& e) {
        err << "experiment: " << e.what() << "\n";
        return kExitUsage;
    }
    ConvergenceReport report;
    try {
        report = run_experiment(cfg, a.workers);
        write_report(report, a.out_dir);
    } catch (const std::exception& e) {
        err << "experiment: " << e.what() << "\n";
        return kExitUsage;
    }
    for (const auto& s : report.summaries) {
        out << "slope[" << s.arch << "]=" << (s.slope ? num(s.slope->slope) : "nan") << "\n";
    }
    out << "cells=" << report.rows.size() << " failed=" << report.failures.size() << "\n";
    if (!report.failures.empty()) {
        for (const auto& f : report.failures) err << "experiment: " << f.message << "\n";
        err << "experiment: warning: summary covers completed cells only\n";
        return kExitPartial;
    }
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Spline KAN regression: data generation, fitting and convergence experiments", "kanrate"};
    app.require_subcommand(1);

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "Write a synthetic data set as CSV");
    g->add_option("--target", gen.target, "piecewise-poly or fourier")->required();
    g->add_option("--r", gen.r, "Smoothness index");
    g->add_option("--d", gen.d, "Input dimension");
    g->add_option("--n", gen.n, "Number of samples")->required();
    g->add_option("--sigma", gen.sigma, "Noise standard deviation");
    g->add_option("--seed", gen.seed, "Random seed");
    g->add_option("--out", gen.out, "Output CSV path")->required();

    FitArgs fa;
    auto* f = app.add_subcommand("fit", "Fit a KAN by backfitting and save it");
    f->add_option("--arch", fa.arch, "additive or hybrid");
    f->add_option("--q", fa.q, "Number of nodes");
    f->add_option("--degree", fa.degree, "Spline degree");
    f->add_option("--r", fa.r, "Smoothness index used by the knot rule");
    f->add_option("--data", fa.data, "Training CSV")->required();
    f->add_option("--model-out", fa.model_out, "Model output path")->required();
    f->add_option("--knot-c", fa.knot_c, "Knot rule constant");
    f->add_option("--seed", fa.seed, "Initialization seed");
    f->add_option("--max-sweeps", fa.max_sweeps, "Sweep limit");

    EvalArgs ea;
    auto* e = app.add_subcommand("eval", "Mean squared error of a saved model");
    e->add_option("--model", ea.model, "Model file")->required();
    auto* data_opt = e->add_option("--data", ea.data, "CSV to evaluate against");
    auto* target_opt = e->add_option("--target", ea.target, "Noiseless target: piecewise-poly or fourier");
    e->add_option("--r", ea.r, "Smoothness index of the target");
    e->add_option("--test-points", ea.test_points, "Monte Carlo points for --target");
    e->add_option("--seed", ea.seed, "Seed of the test points");

    ExperimentArgs xa;
    auto* x = app.add_subcommand("experiment", "Run a convergence study");
    x->add_option("--config", xa.config, "Experiment config file")->required();
    x->add_option("--out-dir", xa.out_dir, "Report directory")->required();
    x->add_option("--workers", xa.workers, "Worker threads");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& pe) {
        err << "error: " << pe.what() << "\n";
        const auto subs = app.get_subcommands();
        err << (subs.empty() ? app.help() : subs.front()->help());
        return kExitUsage;
    }

    if (g->parsed()) return cmd_gen(gen, out, err);
    if (f->parsed()) return cmd_fit(fa, out, err);
    if (e->parsed()) return cmd_eval(ea, data_opt->count() > 0, target_opt->count() > 0, out, err);
    return cmd_experiment(xa, out, err);
}

}  // namespace kanrate
