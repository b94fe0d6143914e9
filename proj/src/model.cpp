#include "kanrate/model.hpp"

#include "kanrate/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace kanrate {

std::string_view to_string(AggregationKind kind) {
    return kind == AggregationKind::Additive ? "additive" : "multiplicative";
}

AggregationKind parse_aggregation_kind(std::string_view text) {
    if (text == "additive") return AggregationKind::Additive;
    if (text == "multiplicative") return AggregationKind::Multiplicative;
    throw std::invalid_argument("unknown aggregation kind '" + std::string(text) + "'");
}

Normalizer::Normalizer(double lo, double hi) : lo_(lo), hi_(hi) {
    if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi)) {
        throw std::invalid_argument("Normalizer: requires finite lo < hi");
    }
}

double Normalizer::operator()(double u) const {
    return std::clamp((u - lo_) / (hi_ - lo_), 0.0, 1.0);
}

Normalizer Normalizer::fit(std::span<const double> values, double padding) {
    if (values.empty()) return Normalizer(0.0, 1.0);
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    double lo = *mn;
    double hi = *mx;
    const double width = hi - lo;
    if (!(width > 1e-12 * std::max({1.0, std::abs(lo), std::abs(hi)}))) {
        const double centre = 0.5 * (lo + hi);
        return Normalizer(centre - 0.5, centre + 0.5);
    }
    return Normalizer(lo - padding * width, hi + padding * width);
}

double clamp_inner(const KanNode& node, double value) {
    if (node.kind == AggregationKind::Additive) return value;
    return std::clamp(value, -node.output_bound, node.output_bound);
}

double node_transform(const KanNode& node, std::span<const double> x) {
    if (x.size() != node.inner.size()) {
        throw std::invalid_argument("node_transform: point has " + std::to_string(x.size()) +
                                    " coordinates, node expects " +
                                    std::to_string(node.inner.size()));
    }
    if (node.kind == AggregationKind::Additive) {
        double s = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) s += node.inner[j](x[j]);
        return s;
    }
    double prod = 1.0;
    for (std::size_t j = 0; j < x.size(); ++j) prod *= clamp_inner(node, node.inner[j](x[j]));
    return prod;
}

double node_forward(const KanNode& node, std::span<const double> x) {
    return node.outer(node.normalizer(node_transform(node, x)));
}

namespace {

void validate_node(const KanNode& node, int dimension, std::size_t q) {
    const std::string where = "node " + std::to_string(q) + ": ";
    if (node.inner.size() != static_cast<std::size_t>(dimension)) {
        throw std::invalid_argument(where + "has " + std::to_string(node.inner.size()) +
                                    " inner splines, expected " + std::to_string(dimension));
    }
    if (!(node.output_bound > 0.0) || !std::isfinite(node.output_bound)) {
        throw std::invalid_argument(where + "output bound M must be finite and > 0");
    }
    auto check = [&](const SplineFunction& s, const std::string& name) {
        if (s.coefficients().empty()) throw std::invalid_argument(where + name + " is empty");
        for (double c : s.coefficients()) {
            if (!std::isfinite(c)) throw std::invalid_argument(where + name + " has a non-finite coefficient");
        }
    };
    for (std::size_t j = 0; j < node.inner.size(); ++j) check(node.inner[j], "inner " + std::to_string(j));
    check(node.outer, "outer");
}

}  // namespace

KanModel::KanModel(int dimension, std::vector<KanNode> nodes, int smoothness_hint)
    : dimension_(dimension), smoothness_hint_(smoothness_hint), nodes_(std::move(nodes)) {
    if (dimension_ < 1) throw std::invalid_argument("KanModel: dimension must be >= 1");
    if (smoothness_hint_ < 1) throw std::invalid_argument("KanModel: smoothness hint r must be >= 1");
    if (nodes_.empty()) throw std::invalid_argument("KanModel: needs at least one node (Q >= 1)");
    for (std::size_t q = 0; q < nodes_.size(); ++q) validate_node(nodes_[q], dimension_, q);
}

void KanModel::set_node(std::size_t q, KanNode node) {
    validate_node(node, dimension_, q);
    nodes_.at(q) = std::move(node);
}

double model_forward(const KanModel& model, std::span<const double> x) {
    if (x.size() != static_cast<std::size_t>(model.dimension())) {
        throw std::invalid_argument("model_forward: point has " + std::to_string(x.size()) +
                                    " coordinates, model dimension is " +
                                    std::to_string(model.dimension()));
    }
    double s = 0.0;
    for (const auto& node : model.nodes()) s += node_forward(node, x);
    return s;
}

KanModel init_model(int d, std::span<const AggregationKind> kinds, const InitOptions& options,
                    std::uint64_t seed) {
    if (d < 1) throw std::invalid_argument("init_model: d must be >= 1");
    if (kinds.empty()) throw std::invalid_argument("init_model: needs at least one node");
    if (options.degree < 0 || options.inner_interior_count < 0 || options.outer_interior_count < 0) {
        throw std::invalid_argument("init_model: degree and knot counts must be >= 0");
    }
    if (!(options.noise >= 0.0)) throw std::invalid_argument("init_model: noise must be >= 0");
    const KnotVector inner_knots(options.inner_interior_count, options.degree);
    const KnotVector outer_knots(options.outer_interior_count, options.degree);
    Rng rng(seed);
    std::vector<KanNode> nodes;
    nodes.reserve(kinds.size());
    for (AggregationKind kind : kinds) {
        KanNode node;
        node.kind = kind;
        node.output_bound = options.output_bound;
        const double scale = kind == AggregationKind::Additive ? 1.0 / d : 1.0;
        for (int j = 0; j < d; ++j) {
            auto c = identity_spline(inner_knots, scale).coefficients();
            if (options.noise > 0.0) {
                for (auto& v : c) v += rng.uniform(-options.noise, options.noise);
            }
            node.inner.emplace_back(inner_knots, std::move(c));
        }
        node.outer = identity_spline(outer_knots);
        node.normalizer = Normalizer(0.0, 1.0);
        nodes.push_back(std::move(node));
    }
    return KanModel(d, std::move(nodes), options.smoothness_hint);
}

KanModel init_model(int d, int q, std::span<const AggregationKind> kinds, int degree,
                    int interior_count, std::uint64_t seed) {
    if (q < 1 || kinds.size() != static_cast<std::size_t>(q)) {
        throw std::invalid_argument("init_model: Q must be >= 1 and match the number of kinds");
    }
    InitOptions options;
    options.degree = degree;
    options.inner_interior_count = interior_count;
    options.outer_interior_count = interior_count;
    return init_model(d, kinds, options, seed);
}

std::vector<AggregationKind> architecture_kinds(std::string_view architecture, int q) {
    if (q < 1) throw std::invalid_argument("architecture_kinds: Q must be >= 1");
    if (architecture == "additive") return std::vector<AggregationKind>(static_cast<std::size_t>(q), AggregationKind::Additive);
    if (architecture == "hybrid") {
        std::vector<AggregationKind> kinds(static_cast<std::size_t>(q / 2), AggregationKind::Additive);
        kinds.insert(kinds.end(), static_cast<std::size_t>(q - q / 2), AggregationKind::Multiplicative);
        return kinds;
    }
    throw std::invalid_argument("unknown architecture '" + std::string(architecture) +
                                "' (expected additive or hybrid)");
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

std::string number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_spline(std::ostringstream& out, const SplineFunction& s) {
    out << "{\"degree\": " << s.degree() << ", \"interior_count\": " << s.basis().interior_count()
        << ", \"coefficients\": [";
    const auto& c = s.coefficients();
    for (std::size_t i = 0; i < c.size(); ++i) out << (i ? ", " : "") << number(c[i]);
    out << "]}";
}

using nlohmann::json;

const json& field(const json& obj, const char* name, const std::string& path) {
    if (!obj.is_object()) throw ModelFormatError("model: '" + path + "' must be an object");
    const auto it = obj.find(name);
    if (it == obj.end()) throw ModelFormatError("model: missing field '" + path + "." + name + "'");
    return *it;
}

long long read_int(const json& obj, const char* name, const std::string& path) {
    const json& v = field(obj, name, path);
    if (!v.is_number_integer()) {
        throw ModelFormatError("model: field '" + path + "." + name + "' must be an integer");
    }
    return v.get<long long>();
}

double read_real(const json& obj, const char* name, const std::string& path) {
    const json& v = field(obj, name, path);
    if (!v.is_number()) throw ModelFormatError("model: field '" + path + "." + name + "' must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ModelFormatError("model: field '" + path + "." + name + "' is not finite");
    return d;
}

SplineFunction read_spline(const json& obj, const std::string& path) {
    const long long degree = read_int(obj, "degree", path);
    const long long interior = read_int(obj, "interior_count", path);
    if (degree < 0 || degree > 30) throw ModelFormatError("model: field '" + path + ".degree' out of range");
    if (interior < 0 || interior > 1000000) {
        throw ModelFormatError("model: field '" + path + ".interior_count' out of range");
    }
    const json& coeffs = field(obj, "coefficients", path);
    if (!coeffs.is_array()) throw ModelFormatError("model: field '" + path + ".coefficients' must be an array");
    std::vector<double> c;
    c.reserve(coeffs.size());
    for (const auto& v : coeffs) {
        if (!v.is_number()) {
            throw ModelFormatError("model: field '" + path + ".coefficients' has a non-numeric entry");
        }
        c.push_back(v.get<double>());
    }
    KnotVector knots(static_cast<int>(interior), static_cast<int>(degree));
    if (c.size() != knots.dimension()) {
        throw ModelFormatError("model: field '" + path + ".coefficients' has " + std::to_string(c.size()) +
                               " entries, expected " + std::to_string(knots.dimension()));
    }
    return SplineFunction(std::move(knots), std::move(c));
}

}  // namespace

std::string serialize_model(const KanModel& model) {
    std::ostringstream out;
    out << "{\n  \"format_version\": " << kModelFormatVersion << ",\n  \"d\": " << model.dimension()
        << ",\n  \"r\": " << model.smoothness_hint() << ",\n  \"Q\": " << model.node_count()
        << ",\n  \"nodes\": [";
    for (std::size_t q = 0; q < model.node_count(); ++q) {
        const KanNode& node = model.node(q);
        out << (q ? ",\n" : "\n") << "    {\n      \"kind\": \"" << to_string(node.kind) << "\",\n"
            << "      \"M\": " << number(node.output_bound) << ",\n"
            << "      \"normalizer\": {\"lo\": " << number(node.normalizer.lo())
            << ", \"hi\": " << number(node.normalizer.hi()) << "},\n"
            << "      \"inner\": [";
        for (std::size_t j = 0; j < node.inner.size(); ++j) {
            out << (j ? ",\n" : "\n") << "        ";
            write_spline(out, node.inner[j]);
        }
        out << "\n      ],\n      \"outer\": ";
        write_spline(out, node.outer);
        out << "\n    }";
    }
    out << "\n  ]\n}\n";
    return out.str();
}

KanModel deserialize_model(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        throw ModelFormatError(std::string("model: malformed text: ") + e.what());
    }
    const long long version = read_int(doc, "format_version", "$");
    if (version != kModelFormatVersion) {
        throw ModelFormatError("model: field '$.format_version' is " + std::to_string(version) +
                               ", this build reads version " + std::to_string(kModelFormatVersion));
    }
    const long long d = read_int(doc, "d", "$");
    const long long r = read_int(doc, "r", "$");
    const long long q = read_int(doc, "Q", "$");
    if (d < 1) throw ModelFormatError("model: field '$.d' must be >= 1");
    if (r < 1) throw ModelFormatError("model: field '$.r' must be >= 1");
    if (q < 1) throw ModelFormatError("model: field '$.Q' must be >= 1");
    const json& nodes_json = field(doc, "nodes", "$");
    if (!nodes_json.is_array()) throw ModelFormatError("model: field '$.nodes' must be an array");
    if (nodes_json.size() != static_cast<std::size_t>(q)) {
        throw ModelFormatError("model: field '$.nodes' has " + std::to_string(nodes_json.size()) +
                               " entries but '$.Q' is " + std::to_string(q));
    }
    std::vector<KanNode> nodes;
    for (std::size_t i = 0; i < nodes_json.size(); ++i) {
        const std::string path = "$.nodes[" + std::to_string(i) + "]";
        const json& nj = nodes_json[i];
        KanNode node;
        const json& kind = field(nj, "kind", path);
        if (!kind.is_string()) throw ModelFormatError("model: field '" + path + ".kind' must be a string");
        try {
            node.kind = parse_aggregation_kind(kind.get<std::string>());
        } catch (const std::invalid_argument& e) {
            throw ModelFormatError("model: field '" + path + ".kind': " + e.what());
        }
        node.output_bound = read_real(nj, "M", path);
        const json& norm = field(nj, "normalizer", path);
        const double lo = read_real(norm, "lo", path + ".normalizer");
        const double hi = read_real(norm, "hi", path + ".normalizer");
        if (!(lo < hi)) throw ModelFormatError("model: field '" + path + ".normalizer' requires lo < hi");
        node.normalizer = Normalizer(lo, hi);
        const json& inner = field(nj, "inner", path);
        if (!inner.is_array()) throw ModelFormatError("model: field '" + path + ".inner' must be an array");
        for (std::size_t j = 0; j < inner.size(); ++j) {
            node.inner.push_back(read_spline(inner[j], path + ".inner[" + std::to_string(j) + "]"));
        }
        node.outer = read_spline(field(nj, "outer", path), path + ".outer");
        nodes.push_back(std::move(node));
    }
    try {
        return KanModel(static_cast<int>(d), std::move(nodes), static_cast<int>(r));
    } catch (const std::invalid_argument& e) {
        throw ModelFormatError(std::string("model: ") + e.what());
    }
}

void save_model(const KanModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << serialize_model(model);
    if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

KanModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open model file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return deserialize_model(buf.str());
}

}  // namespace kanrate
