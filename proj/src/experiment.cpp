#include "kanrate/experiment.hpp"

#include "kanrate/rng.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

namespace kanrate {

void ExperimentConfig::validate() const {
    target.validate();
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("sigma must be finite and >= 0");
    if (architectures.empty()) throw std::invalid_argument("no architectures given");
    for (const auto& a : architectures) {
        if (a != "additive" && a != "hybrid") {
            throw std::invalid_argument("unknown architecture '" + a + "' (expected additive or hybrid)");
        }
    }
    if (std::set<std::string>(architectures.begin(), architectures.end()).size() != architectures.size()) {
        throw std::invalid_argument("architectures must not repeat");
    }
    if (n_grid.empty()) throw std::invalid_argument("n_grid is empty");
    if (n_grid.front() < 1) throw std::invalid_argument("n_grid entries must be >= 1");
    for (std::size_t i = 1; i < n_grid.size(); ++i) {
        if (n_grid[i] <= n_grid[i - 1]) throw std::invalid_argument("n_grid must be strictly increasing");
    }
    if (replications < 1) throw std::invalid_argument("replications must be >= 1");
    if (test_points < 1) throw std::invalid_argument("test_points must be >= 1");
    if (q < 1) throw std::invalid_argument("q must be >= 1");
    train.validate();
}

// ---------------------------------------------------------------------------
// Config file

namespace {

std::string trimmed(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return std::string(s);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
    throw ConfigError("config: " + key + " = '" + value + "' is not " + expected);
}

template <class T>
T parse_number(const std::string& key, const std::string& raw, const char* expected) {
    const std::string s = trimmed(raw);
    T v{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) bad_value(key, raw, expected);
    return v;
}

bool parse_bool(const std::string& key, const std::string& raw) {
    const std::string s = trimmed(raw);
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    bad_value(key, raw, "a boolean");
}

std::vector<std::string> parse_list(const std::string& raw) {
    std::vector<std::string> out;
    std::stringstream in(raw);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trimmed(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

}  // namespace

ExperimentConfig parse_experiment_config(std::string_view text) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    std::istringstream in{std::string(text)};
    try {
        pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError("config: line " + std::to_string(e.line()) + ": " + e.message());
    }

    ExperimentConfig cfg;
    for (const auto& [section, body] : tree) {
        if (!body.data().empty()) throw ConfigError("config: key '" + section + "' is outside a section");
        for (const auto& [name, node] : body) {
            const std::string key = section + "." + name;
            const std::string value = node.data();
            if (section == "target") {
                if (name == "kind") {
                    try {
                        cfg.target.kind = parse_target_kind(trimmed(value));
                    } catch (const std::invalid_argument&) {
                        bad_value(key, value, "piecewise-poly or fourier");
                    }
                } else if (name == "r") {
                    cfg.target.r = parse_number<int>(key, value, "an integer");
                } else if (name == "d") {
                    cfg.target.d = parse_number<int>(key, value, "an integer");
                } else if (name == "sigma") {
                    cfg.sigma = parse_number<double>(key, value, "a number");
                } else if (name == "fourier_truncation") {
                    cfg.target.fourier_truncation = parse_number<int>(key, value, "an integer");
                } else {
                    throw ConfigError("config: unknown key '" + key + "'");
                }
            } else if (section == "experiment") {
                if (name == "architectures") {
                    cfg.architectures = parse_list(value);
                } else if (name == "n_grid") {
                    cfg.n_grid.clear();
                    for (const auto& item : parse_list(value)) {
                        cfg.n_grid.push_back(parse_number<long long>(key, item, "a list of integers"));
                    }
                } else if (name == "replications") {
                    cfg.replications = parse_number<int>(key, value, "an integer");
                } else if (name == "base_seed") {
                    cfg.base_seed = parse_number<std::uint64_t>(key, value, "an unsigned integer");
                } else if (name == "test_points") {
                    cfg.test_points = parse_number<int>(key, value, "an integer");
                } else if (name == "q") {
                    cfg.q = parse_number<int>(key, value, "an integer");
                } else if (name == "record_wall_time") {
                    cfg.record_wall_time = parse_bool(key, value);
                } else {
                    throw ConfigError("config: unknown key '" + key + "'");
                }
            } else if (section == "train") {
                TrainConfig& t = cfg.train;
                if (name == "max_sweeps") {
                    t.max_sweeps = parse_number<int>(key, value, "an integer");
                } else if (name == "tol") {
                    t.tol = parse_number<double>(key, value, "a number");
                } else if (name == "ridge") {
                    t.ridge = parse_number<double>(key, value, "a number");
                } else if (name == "deriv_floor") {
                    t.deriv_floor = parse_number<double>(key, value, "a number");
                } else if (name == "degree") {
                    t.degree = parse_number<int>(key, value, "an integer");
                } else if (name == "knot_c") {
                    t.knot_c = parse_number<double>(key, value, "a number");
                } else if (name == "inner_knot_count") {
                    t.inner_knot_count = parse_number<int>(key, value, "an integer");
                } else if (name == "outer_knot_count") {
                    t.outer_knot_count = parse_number<int>(key, value, "an integer");
                } else if (name == "normalizer_padding") {
                    t.normalizer_padding = parse_number<double>(key, value, "a number");
                } else if (name == "max_step_halvings") {
                    t.max_step_halvings = parse_number<int>(key, value, "an integer");
                } else if (name == "freeze_normalizers") {
                    t.freeze_normalizers = parse_bool(key, value);
                } else {
                    throw ConfigError("config: unknown key '" + key + "'");
                }
            } else {
                throw ConfigError("config: unknown section [" + section + "]");
            }
        }
    }
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_experiment_config(buf.str());
}

// ---------------------------------------------------------------------------
// Cells

double estimate_test_mse(const KanModel& model, const TargetSpec& spec, int m, std::uint64_t seed) {
    if (m < 1) throw std::invalid_argument("estimate_test_mse: m must be >= 1");
    if (model.dimension() != spec.d) {
        throw std::invalid_argument("estimate_test_mse: model dimension " + std::to_string(model.dimension()) +
                                    " does not match target dimension " + std::to_string(spec.d));
    }
    const Target target(spec);
    const auto d = static_cast<std::size_t>(spec.d);
    const auto points = uniform_points(spec.d, static_cast<std::size_t>(m), seed);
    double s = 0.0;
    for (std::size_t i = 0; i < static_cast<std::size_t>(m); ++i) {
        const std::span<const double> x(points.data() + i * d, d);
        const double e = model_forward(model, x) - target(x);
        s += e * e;
    }
    return s / static_cast<double>(m);
}

std::uint64_t cell_data_seed(std::uint64_t base_seed, long long n, int rep) {
    return derive_seed(base_seed, "data/" + std::to_string(n) + "/" + std::to_string(rep));
}

std::uint64_t cell_init_seed(std::uint64_t base_seed, std::string_view arch, long long n, int rep) {
    return derive_seed(base_seed, "init/" + std::string(arch) + "/" + std::to_string(n) + "/" + std::to_string(rep));
}

std::uint64_t cell_test_seed(std::uint64_t base_seed, long long n, int rep) {
    return derive_seed(base_seed, "test/" + std::to_string(n) + "/" + std::to_string(rep));
}

ReportRow run_cell(const ExperimentConfig& cfg, const std::string& arch, long long n, int rep) {
    const auto start = std::chrono::steady_clock::now();
    ReportRow row;
    row.arch = arch;
    row.n = n;
    row.seed = cell_data_seed(cfg.base_seed, n, rep);
    try {
        const Dataset data = generate(cfg.target, {n, cfg.sigma, row.seed});
        TrainConfig train = cfg.train;
        train.seed = cell_init_seed(cfg.base_seed, arch, n, rep);
        const auto kinds = architecture_kinds(arch, cfg.q);
        const FitResult result = fit(make_initial_model(kinds, data, cfg.target.r, train), data, train);
        row.train_mse = result.trace.mse.empty() ? result.trace.initial_mse : result.trace.mse.back();
        row.sweeps = result.trace.sweeps;
        row.test_mse = estimate_test_mse(result.model, cfg.target, cfg.test_points,
                                         cell_test_seed(cfg.base_seed, n, rep));
    } catch (const std::exception& e) {
        throw CellError("cell (arch=" + arch + ", n=" + std::to_string(n) + ", rep=" + std::to_string(rep) +
                        "): " + e.what());
    }
    if (cfg.record_wall_time) {
        row.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start)
                          .count();
    }
    return row;
}

// ---------------------------------------------------------------------------
// Aggregation

SlopeFit fit_loglog_slope(std::span<const std::pair<double, double>> points) {
    if (points.size() < 3) throw std::invalid_argument("fit_loglog_slope: need at least 3 points");
    const auto m = static_cast<double>(points.size());
    double mx = 0.0, my = 0.0;
    std::vector<double> lx, ly;
    for (const auto& [n, mse] : points) {
        if (!(n > 0.0) || !(mse > 0.0) || !std::isfinite(n) || !std::isfinite(mse)) {
            throw std::invalid_argument("fit_loglog_slope: n and mse must be positive and finite");
        }
        lx.push_back(std::log(n));
        ly.push_back(std::log(mse));
        mx += lx.back();
        my += ly.back();
    }
    mx /= m;
    my /= m;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    if (!(sxx > 0.0)) throw std::invalid_argument("fit_loglog_slope: n values must not all be equal");
    SlopeFit out;
    out.slope = sxy / sxx;
    out.intercept = my - out.slope * mx;
    double rss = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        const double e = ly[i] - (out.intercept + out.slope * lx[i]);
        rss += e * e;
    }
    out.stderr_slope = std::sqrt(rss / (m - 2.0) / sxx);
    out.n_points = static_cast<int>(points.size());
    return out;
}

double median(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median of an empty set");
    std::sort(values.begin(), values.end());
    const std::size_t h = values.size() / 2;
    return values.size() % 2 ? values[h] : 0.5 * (values[h - 1] + values[h]);
}

std::vector<ArchSummary> summarize(const std::vector<ReportRow>& rows) {
    std::map<std::string, std::map<long long, std::vector<double>>> grouped;
    for (const auto& row : rows) grouped[row.arch][row.n].push_back(row.test_mse);
    std::vector<ArchSummary> out;
    for (const auto& [arch, by_n] : grouped) {
        ArchSummary s;
        s.arch = arch;
        std::vector<std::pair<double, double>> points;
        bool positive = true;
        for (const auto& [n, values] : by_n) {
            const double med = median(values);
            s.medians.emplace_back(n, med);
            points.emplace_back(static_cast<double>(n), med);
            positive = positive && med > 0.0;
        }
        if (points.size() >= 3 && positive) s.slope = fit_loglog_slope(points);
        out.push_back(std::move(s));
    }
    return out;
}

namespace {

bool row_less(const ReportRow& a, const ReportRow& b) {
    if (a.arch != b.arch) return a.arch < b.arch;
    if (a.n != b.n) return a.n < b.n;
    return a.seed < b.seed;
}

}  // namespace

ConvergenceReport run_experiment(const ExperimentConfig& cfg, int workers) {
    cfg.validate();
    if (workers < 1) throw std::invalid_argument("workers must be >= 1");
    struct Job {
        std::string arch;
        long long n;
        int rep;
    };
    std::vector<Job> jobs;
    for (const auto& arch : cfg.architectures) {
        for (long long n : cfg.n_grid) {
            for (int rep = 0; rep < cfg.replications; ++rep) jobs.push_back({arch, n, rep});
        }
    }
    // Largest cells first so the pool drains evenly.
    std::stable_sort(jobs.begin(), jobs.end(), [](const Job& a, const Job& b) { return a.n > b.n; });

    std::vector<std::optional<ReportRow>> results(jobs.size());
    std::vector<std::string> errors(jobs.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t k = next++; k < jobs.size(); k = next++) {
            try {
                results[k] = run_cell(cfg, jobs[k].arch, jobs[k].n, jobs[k].rep);
            } catch (const std::exception& e) {
                errors[k] = e.what();
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        const auto count = std::min<std::size_t>(static_cast<std::size_t>(workers), jobs.size());
        for (std::size_t t = 1; t < count; ++t) pool.emplace_back(work);
        work();
    }

    ConvergenceReport report;
    for (std::size_t k = 0; k < jobs.size(); ++k) {
        if (results[k]) {
            report.rows.push_back(std::move(*results[k]));
        } else {
            report.failures.push_back({jobs[k].arch, jobs[k].n, jobs[k].rep, errors[k]});
        }
    }
    std::sort(report.rows.begin(), report.rows.end(), row_less);
    std::sort(report.failures.begin(), report.failures.end(), [](const CellFailure& a, const CellFailure& b) {
        return std::tie(a.arch, a.n, a.rep) < std::tie(b.arch, b.n, b.rep);
    });
    report.summaries = summarize(report.rows);
    return report;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

}  // namespace

std::string rows_csv(const std::vector<ReportRow>& rows) {
    std::string out = "arch,n,seed,train_mse,test_mse,sweeps,wall_ms\n";
    for (const auto& r : rows) {
        out += r.arch + "," + std::to_string(r.n) + "," + std::to_string(r.seed) + "," + num(r.train_mse) + "," +
               num(r.test_mse) + "," + std::to_string(r.sweeps) + "," + std::to_string(r.wall_ms) + "\n";
    }
    return out;
}

std::string summary_csv(const std::vector<ArchSummary>& summaries) {
    std::string out = "arch,slope,stderr,intercept,n_points\n";
    for (const auto& s : summaries) {
        if (s.slope) {
            out += s.arch + "," + num(s.slope->slope) + "," + num(s.slope->stderr_slope) + "," +
                   num(s.slope->intercept) + "," + std::to_string(s.slope->n_points) + "\n";
        } else {
            out += s.arch + ",nan,nan,nan," + std::to_string(s.medians.size()) + "\n";
        }
    }
    return out;
}

std::string medians_csv(const std::vector<ArchSummary>& summaries) {
    std::string out = "arch,n,median_test_mse,log10_n,log10_median_test_mse\n";
    for (const auto& s : summaries) {
        for (const auto& [n, med] : s.medians) {
            out += s.arch + "," + std::to_string(n) + "," + num(med) + "," + num(std::log10(static_cast<double>(n))) +
                   "," + num(std::log10(med)) + "\n";
        }
    }
    return out;
}

void write_report(const ConvergenceReport& report, const std::string& dir) {
    const std::filesystem::path root(dir);
    std::filesystem::create_directories(root);
    write_text(root / "rows.csv", rows_csv(report.rows));
    write_text(root / "summary.csv", summary_csv(report.summaries));
    write_text(root / "medians.csv", medians_csv(report.summaries));
}

ConvergenceReport read_report(const std::string& dir) {
    const auto path = std::filesystem::path(dir) / "rows.csv";
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line) || line != "arch,n,seed,train_mse,test_mse,sweeps,wall_ms") {
        throw std::runtime_error(path.string() + ": unexpected header");
    }
    ConvergenceReport report;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = parse_list(line);
        if (fields.size() != 7) {
            throw std::runtime_error(path.string() + ": line " + std::to_string(line_no) + " has " +
                                     std::to_string(fields.size()) + " fields, expected 7");
        }
        try {
            ReportRow r;
            r.arch = fields[0];
            r.n = parse_number<long long>("n", fields[1], "an integer");
            r.seed = parse_number<std::uint64_t>("seed", fields[2], "an unsigned integer");
            r.train_mse = parse_number<double>("train_mse", fields[3], "a number");
            r.test_mse = parse_number<double>("test_mse", fields[4], "a number");
            r.sweeps = parse_number<int>("sweeps", fields[5], "an integer");
            r.wall_ms = parse_number<long long>("wall_ms", fields[6], "an integer");
            report.rows.push_back(std::move(r));
        } catch (const ConfigError& e) {
            throw std::runtime_error(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    std::sort(report.rows.begin(), report.rows.end(), row_less);
    report.summaries = summarize(report.rows);
    return report;
}

}  // namespace kanrate
