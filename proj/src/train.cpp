#include "kanrate/train.hpp"

#include <algorithm>
#include <cmath>

namespace kanrate {

void TrainConfig::validate() const {
    if (max_sweeps < 1) throw std::invalid_argument("TrainConfig: max_sweeps must be >= 1");
    if (!(tol >= 0.0)) throw std::invalid_argument("TrainConfig: tol must be >= 0");
    if (!(ridge >= 0.0) || !std::isfinite(ridge)) throw std::invalid_argument("TrainConfig: ridge must be >= 0");
    if (!(deriv_floor > 0.0)) throw std::invalid_argument("TrainConfig: deriv_floor must be > 0");
    if (degree < 0) throw std::invalid_argument("TrainConfig: degree must be >= 0");
    if (inner_knot_count && *inner_knot_count < 0) throw std::invalid_argument("TrainConfig: inner_knot_count must be >= 0");
    if (outer_knot_count && *outer_knot_count < 0) throw std::invalid_argument("TrainConfig: outer_knot_count must be >= 0");
    if (!(knot_c > 0.0)) throw std::invalid_argument("TrainConfig: knot_c must be > 0");
    if (!(normalizer_padding >= 0.0)) throw std::invalid_argument("TrainConfig: normalizer_padding must be >= 0");
    if (max_step_halvings < 0) throw std::invalid_argument("TrainConfig: max_step_halvings must be >= 0");
}

namespace {

void require_dimension(const KanModel& model, const Dataset& data) {
    if (model.dimension() != data.dimension()) {
        throw std::invalid_argument("model dimension " + std::to_string(model.dimension()) +
                                    " does not match data dimension " + std::to_string(data.dimension()));
    }
}

// Cached per-node quantities over the training set. T and the outputs are
// formed in the same order as node_transform()/node_forward(), so they are
// bitwise equal to a fresh evaluation of the node.
class NodeCache {
public:
    NodeCache(const KanNode& node, const std::vector<std::vector<double>>& columns)
        : n_(columns.empty() ? 0 : columns[0].size()), d_(columns.size()), inner_(n_ * d_), t_(n_), out_(n_) {
        for (std::size_t j = 0; j < d_; ++j) eval_column(node.inner[j], columns[j], j, inner_);
        aggregate(node, inner_, t_);
        outputs(node, t_, out_);
    }

    std::size_t size() const { return n_; }
    double inner(std::size_t i, std::size_t j) const { return inner_[i * d_ + j]; }
    const std::vector<double>& inner_values() const { return inner_; }
    const std::vector<double>& transform() const { return t_; }
    const std::vector<double>& output() const { return out_; }

    void refresh_outputs(const KanNode& node) { outputs(node, t_, out_); }

    void eval_column(const SplineFunction& f, const std::vector<double>& xs, std::size_t j,
                     std::vector<double>& inner) const {
        for (std::size_t i = 0; i < n_; ++i) inner[i * d_ + j] = f(xs[i]);
    }

    void aggregate(const KanNode& node, const std::vector<double>& inner, std::vector<double>& t) const {
        for (std::size_t i = 0; i < n_; ++i) {
            const double* row = inner.data() + i * d_;
            if (node.kind == AggregationKind::Additive) {
                double s = 0.0;
                for (std::size_t j = 0; j < d_; ++j) s += row[j];
                t[i] = s;
            } else {
                double p = 1.0;
                for (std::size_t j = 0; j < d_; ++j) p *= clamp_inner(node, row[j]);
                t[i] = p;
            }
        }
    }

    void outputs(const KanNode& node, const std::vector<double>& t, std::vector<double>& out) const {
        for (std::size_t i = 0; i < n_; ++i) out[i] = node.outer(node.normalizer(t[i]));
    }

    void replace(std::vector<double> inner, std::vector<double> t, std::vector<double> out) {
        inner_ = std::move(inner);
        t_ = std::move(t);
        out_ = std::move(out);
    }

private:
    std::size_t n_;
    std::size_t d_;
    std::vector<double> inner_;
    std::vector<double> t_;
    std::vector<double> out_;
};

std::vector<std::vector<double>> columns_of(const Dataset& data) {
    std::vector<std::vector<double>> cols(static_cast<std::size_t>(data.dimension()));
    for (std::size_t j = 0; j < cols.size(); ++j) cols[j] = data.column(j);
    return cols;
}

double sse(std::span<const double> residual, std::span<const double> out) {
    double s = 0.0;
    for (std::size_t i = 0; i < residual.size(); ++i) {
        const double e = residual[i] - out[i];
        s += e * e;
    }
    return s;
}

SplineFit outer_fit(const KanNode& node, const NodeCache& cache, std::span<const double> residual,
                    const TrainConfig& cfg) {
    std::vector<double> v(cache.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = node.normalizer(cache.transform()[i]);
    return fit_spline_ls(v, residual, std::nullopt, node.outer.basis(), cfg.ridge);
}

InnerSystem build_inner_system(const KanNode& node, const NodeCache& cache, std::span<const double> residual,
                               std::size_t j, const TrainConfig& cfg) {
    const std::size_t n = cache.size();
    const std::size_t d = node.inner.size();
    const double width = node.normalizer.width();
    const double floor = cfg.deriv_floor;
    InnerSystem sys;
    sys.pseudo_response.resize(n);
    sys.weights.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double v = node.normalizer(cache.transform()[i]);
        const double slope = node.outer.degree() > 0 ? eval_spline_derivative(node.outer, v) / width : 0.0;
        double partner = 1.0;
        if (node.kind == AggregationKind::Multiplicative) {
            for (std::size_t l = 0; l < d; ++l) {
                if (l != j) partner *= clamp_inner(node, cache.inner(i, l));
            }
        }
        const double sens = slope * partner;
        const double denom = std::abs(sens) >= floor ? sens : (sens < 0.0 ? -floor : floor);
        sys.weights[i] = std::max(sens * sens, floor * floor);
        sys.pseudo_response[i] = cache.inner(i, j) + (residual[i] - cache.output()[i]) / denom;
    }
    return sys;
}

InnerUpdate inner_proposal(const KanNode& node, const NodeCache& cache, const std::vector<double>& column,
                           std::span<const double> residual, std::size_t j, const TrainConfig& cfg) {
    const InnerSystem sys = build_inner_system(node, cache, residual, j, cfg);
    InnerUpdate out;
    if (std::all_of(sys.weights.begin(), sys.weights.end(), [](double w) { return w == 0.0; })) {
        out.spline = node.inner[j];
        out.skipped = true;
        return out;
    }
    SplineFit fitted = fit_spline_ls(column, sys.pseudo_response, std::span<const double>(sys.weights),
                                     node.inner[j].basis(), cfg.ridge);
    out.spline = std::move(fitted.spline);
    out.ridge_fallback = fitted.ridge_fallback;
    return out;
}

void require_finite(double value, const char* what, int sweep, std::size_t q) {
    if (!std::isfinite(value)) {
        throw TrainingError(std::string("non-finite ") + what + " at sweep " + std::to_string(sweep) +
                            ", node " + std::to_string(q));
    }
}

class Backfitter {
public:
    Backfitter(const KanModel& model, const Dataset& data, const TrainConfig& cfg)
        : nodes_(model.nodes()), data_(data), cfg_(cfg), columns_(columns_of(data)) {
        caches_.reserve(nodes_.size());
        for (const auto& node : nodes_) caches_.emplace_back(node, columns_);
    }

    double mse() const {
        const auto& y = data_.responses();
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            double total = 0.0;
            for (const auto& c : caches_) total += c.output()[i];
            const double e = y[i] - total;
            s += e * e;
        }
        return s / static_cast<double>(y.size());
    }

    void sweep(int sweep_index, FitTrace& trace) {
        for (std::size_t q = 0; q < nodes_.size(); ++q) update_node(q, sweep_index, trace);
    }

    std::vector<KanNode> take_nodes() { return std::move(nodes_); }

private:
    std::vector<double> residual_for(std::size_t q) const {
        const auto& y = data_.responses();
        std::vector<double> r(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) {
            double others = 0.0;
            for (std::size_t k = 0; k < caches_.size(); ++k) {
                if (k != q) others += caches_[k].output()[i];
            }
            r[i] = y[i] - others;
        }
        return r;
    }

    void refresh(std::size_t q) {
        nodes_[q].normalizer = Normalizer::fit(caches_[q].transform(), cfg_.normalizer_padding);
        caches_[q].refresh_outputs(nodes_[q]);
    }

    // Least-squares outer refit, kept only if it does not increase the node's
    // residual sum of squares.
    void update_outer(std::size_t q, const std::vector<double>& residual, int sweep_index, FitTrace& trace) {
        KanNode& node = nodes_[q];
        NodeCache& cache = caches_[q];
        const double before = sse(residual, cache.output());
        SplineFit fitted = outer_fit(node, cache, residual, cfg_);
        if (fitted.ridge_fallback) ++trace.ridge_fallbacks;
        KanNode candidate = node;
        candidate.outer = std::move(fitted.spline);
        std::vector<double> out(cache.size());
        cache.outputs(candidate, cache.transform(), out);
        const double after = sse(residual, out);
        require_finite(after, "outer residual", sweep_index, q);
        if (after <= before) {
            node = std::move(candidate);
            cache.replace(cache.inner_values(), cache.transform(), std::move(out));
        }
    }

    void update_inner(std::size_t q, std::size_t j, const std::vector<double>& residual, int sweep_index,
                      FitTrace& trace) {
        KanNode& node = nodes_[q];
        NodeCache& cache = caches_[q];
        InnerUpdate proposal = inner_proposal(node, cache, columns_[j], residual, j, cfg_);
        if (proposal.ridge_fallback) ++trace.ridge_fallbacks;
        if (proposal.skipped) {
            ++trace.skipped_inner_updates;
            return;
        }
        const double before = sse(residual, cache.output());
        const auto& old_c = node.inner[j].coefficients();
        const auto& new_c = proposal.spline.coefficients();
        for (double c : new_c) require_finite(c, "inner coefficient", sweep_index, q);

        std::vector<double> inner = cache.inner_values();
        std::vector<double> t(cache.size());
        std::vector<double> out(cache.size());
        double step = 1.0;
        for (int h = 0; h <= cfg_.max_step_halvings; ++h, step *= 0.5) {
            SplineFunction trial = proposal.spline;
            if (h > 0) {
                std::vector<double> c(old_c.size());
                for (std::size_t k = 0; k < c.size(); ++k) c[k] = old_c[k] + step * (new_c[k] - old_c[k]);
                trial = SplineFunction(node.inner[j].basis(), std::move(c));
            }
            KanNode candidate = node;
            candidate.inner[j] = std::move(trial);
            cache.eval_column(candidate.inner[j], columns_[j], j, inner);
            cache.aggregate(candidate, inner, t);
            cache.outputs(candidate, t, out);
            const double after = sse(residual, out);
            require_finite(after, "inner residual", sweep_index, q);
            if (after <= before) {
                node = std::move(candidate);
                cache.replace(std::move(inner), std::move(t), std::move(out));
                return;
            }
        }
        ++trace.rejected_inner_steps;
    }

    void update_node(std::size_t q, int sweep_index, FitTrace& trace) {
        const std::vector<double> residual = residual_for(q);
        if (!cfg_.freeze_normalizers && cfg_.update_outer) refresh(q);
        if (cfg_.update_outer) update_outer(q, residual, sweep_index, trace);
        if (cfg_.update_inner) {
            for (std::size_t j = 0; j < nodes_[q].inner.size(); ++j) {
                update_inner(q, j, residual, sweep_index, trace);
            }
            if (!cfg_.freeze_normalizers && cfg_.update_outer) {
                refresh(q);
                update_outer(q, residual, sweep_index, trace);
            }
        }
    }

    std::vector<KanNode> nodes_;
    const Dataset& data_;
    const TrainConfig& cfg_;
    std::vector<std::vector<double>> columns_;
    std::vector<NodeCache> caches_;
};

}  // namespace

FitResult fit(const KanModel& model, const Dataset& data, const TrainConfig& cfg) {
    cfg.validate();
    require_dimension(model, data);
    Backfitter fitter(model, data, cfg);
    FitTrace trace;
    trace.initial_mse = fitter.mse();
    require_finite(trace.initial_mse, "initial training MSE", 0, 0);
    double prev = trace.initial_mse;
    for (int s = 1; s <= cfg.max_sweeps; ++s) {
        fitter.sweep(s, trace);
        const double cur = fitter.mse();
        require_finite(cur, "training MSE", s, 0);
        trace.mse.push_back(cur);
        trace.sweeps = s;
        if (cur > prev + 1e-6 * (1.0 + cur)) ++trace.nonmonotone_sweeps;
        const double change = prev - cur;
        const bool small = std::abs(change) <= cfg.tol * prev;
        prev = cur;
        if (small) {
            trace.converged = true;
            break;
        }
    }
    return {KanModel(model.dimension(), fitter.take_nodes(), model.smoothness_hint()), std::move(trace)};
}

std::vector<double> partial_residual(const KanModel& model, const Dataset& data, std::size_t q) {
    require_dimension(model, data);
    if (q >= model.node_count()) {
        throw std::out_of_range("partial_residual: node index " + std::to_string(q) + " out of range");
    }
    std::vector<double> r(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        double others = 0.0;
        for (std::size_t k = 0; k < model.node_count(); ++k) {
            if (k != q) others += node_forward(model.node(k), data.row(i));
        }
        r[i] = data.responses()[i] - others;
    }
    return r;
}

SplineFit outer_update(const KanNode& node, const Dataset& data, std::span<const double> residual,
                       const TrainConfig& cfg) {
    if (residual.size() != data.size()) throw std::invalid_argument("outer_update: residual length mismatch");
    const NodeCache cache(node, columns_of(data));
    return outer_fit(node, cache, residual, cfg);
}

InnerSystem inner_system(const KanNode& node, const Dataset& data, std::span<const double> residual,
                         std::size_t j, const TrainConfig& cfg) {
    if (residual.size() != data.size()) throw std::invalid_argument("inner_system: residual length mismatch");
    if (j >= node.inner.size()) throw std::out_of_range("inner_system: coordinate index out of range");
    const NodeCache cache(node, columns_of(data));
    return build_inner_system(node, cache, residual, j, cfg);
}

InnerUpdate inner_update(const KanNode& node, const Dataset& data, std::span<const double> residual,
                         std::size_t j, const TrainConfig& cfg) {
    if (residual.size() != data.size()) throw std::invalid_argument("inner_update: residual length mismatch");
    if (j >= node.inner.size()) throw std::out_of_range("inner_update: coordinate index out of range");
    const auto columns = columns_of(data);
    const NodeCache cache(node, columns);
    return inner_proposal(node, cache, columns[j], residual, j, cfg);
}

Normalizer refresh_normalizer(const KanNode& node, const Dataset& data, double padding) {
    std::vector<double> t(data.size());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = node_transform(node, data.row(i));
    return Normalizer::fit(t, padding);
}

double training_mse(const KanModel& model, const Dataset& data) {
    require_dimension(model, data);
    if (data.size() == 0) throw std::invalid_argument("training_mse: empty data");
    double s = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double e = data.responses()[i] - model_forward(model, data.row(i));
        s += e * e;
    }
    return s / static_cast<double>(data.size());
}

KanModel make_initial_model(std::span<const AggregationKind> kinds, const Dataset& data, int r,
                            const TrainConfig& cfg) {
    cfg.validate();
    const auto n = static_cast<long long>(data.size());
    InitOptions options;
    options.degree = cfg.degree;
    options.inner_interior_count = cfg.inner_knot_count.value_or(knot_count_rule(n, r, cfg.knot_c));
    options.outer_interior_count = cfg.outer_knot_count.value_or(knot_count_rule(n, r, cfg.knot_c));
    options.smoothness_hint = r;
    return init_model(data.dimension(), kinds, options, cfg.seed);
}

}  // namespace kanrate
