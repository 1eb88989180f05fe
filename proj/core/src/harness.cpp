#include "mmblock/harness.hpp"

#include "mmblock/error.hpp"
#include "mmblock/linalg.hpp"
#include "mmblock/projection.hpp"

#include "detail.hpp"

#include <json.hpp>

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <sstream>

namespace mmb {

using json = nlohmann::json;
using detail::idx;

namespace {

json number(double v) {
    if (std::isfinite(v)) return v;
    if (std::isnan(v)) return "nan";
    return v > 0 ? "inf" : "-inf";
}

double number(const json& j) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
    }
    throw ConfigError("expected a number, got " + j.dump());
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

json parse_json(const std::string& text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid ") + what + " JSON: " + e.what());
    }
}

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
    return m;
}

Matrix random_orthonormal(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    return thin_qr(gaussian(idx(rows), idx(cols), rng)).q;
}

DenseTensor random_core(const Shape& shape, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    DenseTensor t(shape);
    for (double& v : t.data()) v = normal(rng);
    return t;
}

std::vector<Vector> core_sigmas(const DenseTensor& core) {
    std::vector<Vector> out;
    for (std::size_t m = 0; m < core.order(); ++m) out.push_back(thin_svd(matrixize(core, m)).s);
    return out;
}

double max_increase(const std::vector<double>& trace) {
    double worst = 0.0;
    for (std::size_t i = 1; i < trace.size(); ++i) worst = std::max(worst, trace[i] - trace[i - 1]);
    return worst;
}

std::size_t product(const std::vector<std::size_t>& v, std::size_t from = 0) {
    std::size_t p = 1;
    for (std::size_t i = from; i < v.size(); ++i) p *= v[i];
    return p;
}

} // namespace

// SynthConfig --------------------------------------------------------------

Shape SynthConfig::shape() const {
    Shape s{measurement};
    s.insert(s.end(), factors.begin(), factors.end());
    return s;
}

HierarchySpec SynthConfig::hierarchy_spec() const {
    HierarchySpec spec;
    if (!hierarchy.empty()) {
        spec = hierarchy_from_json(hierarchy, measurement);
    } else if (parts > 0) {
        spec = split_parts(measurement, parts);
    } else {
        throw ConfigError("synthetic config has no part structure");
    }
    if (!compositional.empty()) spec.set_compositional(compositional);
    return spec;
}

void SynthConfig::validate() const {
    if (measurement == 0) throw ConfigError("measurement size must be positive");
    if (factors.empty()) throw ConfigError("at least one causal factor is required");
    for (auto f : factors)
        if (f == 0) throw ConfigError("factor cardinalities must be positive");
    if (!(noise >= 0.0) || !std::isfinite(noise)) throw ConfigError("noise must be a finite value >= 0");
    if (!ranks.empty()) {
        const Shape s = shape();
        if (ranks.size() != s.size()) throw ConfigError("ranks need one entry per mode (J_0 first)");
        for (std::size_t m = 0; m < s.size(); ++m)
            if (ranks[m] == 0 || ranks[m] > s[m]) throw ConfigError("rank J_" + std::to_string(m) + " out of range");
    }
    if (compositional.size() > factors.size()) throw ConfigError("more compositional flags than factors");
    if (parts > measurement) throw ConfigError("more parts than measurement entries");
    if (block_truth()) {
        const auto spec = hierarchy_spec();
        if (!spec.leaves_disjoint()) throw ConfigError("synthetic part structure needs disjoint leaves");
        for (const auto& f : spec.leaf_filters())
            if (f.kind() != SegmentFilter::Kind::block_identity)
                throw ConfigError("synthetic part structure needs block-identity leaves");
        if (!spec.leaf_bank().pass) throw ConfigError("synthetic part structure does not cover mode 0");
    }
}

SynthConfig default_part_config() {
    SynthConfig c;
    c.measurement = 64;
    c.factors = {4, 3, 2};
    c.parts = 2;
    return c;
}

std::string synth_config_to_json(const SynthConfig& c) {
    json j{{"measurement", c.measurement}, {"factors", c.factors}, {"ranks", c.ranks},
           {"noise", c.noise},             {"seed", c.seed},       {"parts", c.parts}};
    if (!c.hierarchy.empty()) j["hierarchy"] = parse_json(c.hierarchy, "hierarchy");
    json comp = json::array();
    for (auto f : c.compositional) comp.push_back(f == Compositionality::shared ? "shared" : "full");
    j["compositional"] = comp;
    return j.dump();
}

SynthConfig synth_config_from_json(const std::string& text) {
    const json j = parse_json(text, "synthetic config");
    if (!j.is_object()) throw ConfigError("synthetic config must be a JSON object");
    SynthConfig c;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "measurement") c.measurement = value.get<std::size_t>();
            else if (key == "factors") c.factors = value.get<std::vector<std::size_t>>();
            else if (key == "ranks") c.ranks = value.get<std::vector<std::size_t>>();
            else if (key == "noise") c.noise = value.get<double>();
            else if (key == "seed") c.seed = value.get<std::uint64_t>();
            else if (key == "parts") c.parts = value.get<std::size_t>();
            else if (key == "hierarchy") c.hierarchy = value.dump();
            else if (key == "compositional") {
                for (const auto& f : value) {
                    const auto s = f.get<std::string>();
                    if (s == "full") c.compositional.push_back(Compositionality::full);
                    else if (s == "shared") c.compositional.push_back(Compositionality::shared);
                    else throw ConfigError("compositional flag must be \"full\" or \"shared\"");
                }
            } else {
                throw ConfigError("unknown synthetic config key \"" + key + "\"");
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("synthetic config: ") + e.what());
    }
    c.validate();
    return c;
}

SynthData synth_generate(const SynthConfig& cfg) {
    cfg.validate();
    const Shape shape = cfg.shape();
    const std::size_t order = shape.size();
    std::vector<std::size_t> ranks(order);
    for (std::size_t m = 0; m < order; ++m) ranks[m] = cfg.ranks.empty() ? shape[m] : cfg.ranks[m];
    const std::size_t causal_size = product(ranks, 1);

    std::mt19937_64 rng(cfg.seed);
    SynthData out;
    if (!cfg.block_truth()) {
        ranks[0] = std::min(ranks[0], causal_size);
        FactorModel truth;
        for (std::size_t m = 0; m < order; ++m) truth.modes.push_back(random_orthonormal(shape[m], ranks[m], rng));
        truth.core = random_core(ranks, rng);
        truth.sigmas = core_sigmas(truth.core);
        out.signal = reconstruct(truth);
        out.flat_truth = std::move(truth);
    } else {
        BlockFactorModel truth;
        truth.hierarchy = cfg.hierarchy_spec();
        truth.data_shape = shape;
        truth.compositional = truth.hierarchy.compositional_flags();
        std::vector<Matrix> shared(order);
        for (std::size_t c = 1; c < order; ++c)
            if (truth.hierarchy.compositional(c) == Compositionality::shared)
                shared[c] = random_orthonormal(shape[c], ranks[c], rng);
        for (auto leaf : truth.hierarchy.leaves()) {
            BlockSegment seg;
            seg.node = leaf;
            seg.support = truth.hierarchy.node(leaf).filter.support();
            Shape seg_ranks = ranks;
            seg_ranks[0] = std::min({ranks[0], seg.support.size(), causal_size});
            seg.modes.push_back(
                detail::embed_rows(random_orthonormal(seg.support.size(), seg_ranks[0], rng), seg.support, shape[0]));
            for (std::size_t c = 1; c < order; ++c)
                seg.modes.push_back(shared[c].size() > 0 ? shared[c] : random_orthonormal(shape[c], ranks[c], rng));
            seg.core = random_core(seg_ranks, rng);
            seg.sigmas = core_sigmas(seg.core);
            truth.segments.push_back(std::move(seg));
        }
        truth.lambdas = Matrix::Ones(idx(order), idx(truth.segments.size()));
        out.signal = reconstruct(truth);
        out.block_truth = std::move(truth);
    }

    out.data = out.signal;
    if (cfg.noise > 0.0) {
        std::normal_distribution<double> normal(0.0, cfg.noise);
        for (double& v : out.data.data()) v += normal(rng);
    }
    return out;
}

// Reports ------------------------------------------------------------------

CheckResult make_check(std::string name, double value, std::string relation, double tolerance) {
    bool pass = false;
    if (relation == "<") pass = value < tolerance;
    else if (relation == "<=") pass = value <= tolerance;
    else if (relation == ">=") pass = value >= tolerance;
    else if (relation == ">") pass = value > tolerance;
    else if (relation == "==") pass = value == tolerance;
    else throw ConfigError("unknown check relation \"" + relation + "\"");
    return {std::move(name), value, tolerance, std::move(relation), pass};
}

bool ExperimentReport::all_pass() const {
    for (const auto& c : checks)
        if (!c.pass) return false;
    return true;
}

void ExperimentReport::add_check(CheckResult check) {
    tolerances[check.name] = check.tolerance;
    checks.push_back(std::move(check));
}

std::string ExperimentReport::to_json() const {
    json metrics_j = json::object();
    for (const auto& [k, v] : metrics) metrics_j[k] = number(v);
    json series_j = json::object();
    for (const auto& [k, values] : series) {
        json arr = json::array();
        for (double v : values) arr.push_back(number(v));
        series_j[k] = arr;
    }
    json checks_j = json::array();
    for (const auto& c : checks) {
        checks_j.push_back({{"name", c.name},
                            {"value", number(c.value)},
                            {"tolerance", number(c.tolerance)},
                            {"relation", c.relation},
                            {"pass", c.pass}});
    }
    json tol_j = json::object();
    for (const auto& [k, v] : tolerances) tol_j[k] = number(v);
    json j{{"id", id},
           {"kind", kind},
           {"config_hash", config_hash},
           {"config", config.empty() ? json(nullptr) : parse_json(config, "report config")},
           {"metrics", metrics_j},
           {"series", series_j},
           {"checks", checks_j},
           {"tolerances", tol_j},
           {"pass", all_pass()}};
    return j.dump(2) + "\n";
}

ExperimentReport ExperimentReport::from_json(const std::string& text) {
    const json j = parse_json(text, "report");
    ExperimentReport r;
    try {
        r.id = j.at("id").get<std::string>();
        r.kind = j.at("kind").get<std::string>();
        r.config_hash = j.at("config_hash").get<std::string>();
        if (!j.at("config").is_null()) r.config = j.at("config").dump();
        for (const auto& [k, v] : j.at("metrics").items()) r.metrics[k] = number(v);
        for (const auto& [k, v] : j.at("series").items()) {
            auto& dst = r.series[k];
            for (const auto& e : v) dst.push_back(number(e));
        }
        for (const auto& c : j.at("checks")) {
            r.checks.push_back({c.at("name").get<std::string>(), number(c.at("value")), number(c.at("tolerance")),
                                c.at("relation").get<std::string>(), c.at("pass").get<bool>()});
        }
        for (const auto& [k, v] : j.at("tolerances").items()) r.tolerances[k] = number(v);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed report: ") + e.what());
    }
    return r;
}

std::string ExperimentReport::to_csv() const {
    std::ostringstream out;
    out << "section,name,value,tolerance,relation,pass\n";
    for (const auto& [k, v] : metrics) out << "metric," << k << ',' << format_double(v) << ",,,\n";
    for (const auto& [k, values] : series)
        for (std::size_t i = 0; i < values.size(); ++i)
            out << "series," << k << '[' << i << "]," << format_double(values[i]) << ",,,\n";
    for (const auto& c : checks) {
        out << "check," << c.name << ',' << format_double(c.value) << ',' << format_double(c.tolerance) << ','
            << c.relation << ',' << (c.pass ? "true" : "false") << '\n';
    }
    return out.str();
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
    return buf;
}

std::string ExperimentOptions::to_json(const std::string& kind) const {
    json j{{"kind", kind},
           {"synth", json::parse(synth_config_to_json(synth))},
           {"max_iters", max_iters},
           {"eps", eps},
           {"parallel", parallel},
           {"trials", trials},
           {"order", order},
           {"sizes", sizes},
           {"threads", threads},
           {"block", block}};
    return j.dump();
}

// Observations -------------------------------------------------------------

std::vector<LabeledObservation> enumerate_observations(const DenseTensor& data) {
    if (data.order() < 2) throw DimensionError("observations need at least one causal factor");
    const std::size_t i0 = data.extent(0);
    const std::size_t fibers = data.size() / std::max<std::size_t>(i0, 1);
    std::vector<LabeledObservation> out;
    out.reserve(fibers);
    for (std::size_t f = 0; f < fibers; ++f) {
        LabeledObservation obs;
        std::size_t rest = f;
        for (std::size_t c = 1; c < data.order(); ++c) {
            obs.labels.push_back(rest % data.extent(c));
            rest /= data.extent(c);
        }
        obs.values = Eigen::Map<const Vector>(data.data().data() + f * i0, idx(i0));
        out.push_back(std::move(obs));
    }
    return out;
}

namespace {

std::size_t correct_labels(const std::vector<LabelGuess>& guesses, const std::vector<std::size_t>& labels) {
    std::size_t hits = 0;
    for (std::size_t c = 0; c < labels.size() && c < guesses.size(); ++c) hits += guesses[c].index == labels[c];
    return hits;
}

} // namespace

double label_accuracy(const FactorModel& model, const std::vector<LabeledObservation>& observations) {
    if (observations.empty()) return 0.0;
    std::size_t hits = 0, total = 0;
    for (const auto& obs : observations) {
        total += obs.labels.size();
        try {
            hits += correct_labels(infer_labels(multilinear_project(model, obs.values), model), obs.labels);
        } catch (const NumericalError&) {
            // A projection without direction labels nothing.
        }
    }
    return static_cast<double>(hits) / static_cast<double>(total);
}

// Benchmarks ---------------------------------------------------------------

std::vector<CostSample> bench_cost(std::size_t order, const std::vector<std::size_t>& sizes, std::size_t threads,
                                   std::size_t block, std::uint64_t seed) {
    if (order == 0) throw ConfigError("bench order must be positive");
    if (sizes.empty()) throw ConfigError("bench needs at least one size");
    for (auto n : sizes) {
        if (n < 2 || !predict_cost(n, order).conforming)
            throw ConfigError("N = " + std::to_string(n) + " is not a power of 2^" + std::to_string(order));
    }
    std::vector<CostSample> out;
    for (auto n : sizes) out.push_back(measure_cost(n, order, threads, block, seed));
    return out;
}

std::string bench_csv(const std::vector<CostSample>& samples) {
    std::string out = cost_csv_header() + "\n";
    for (const auto& s : samples) out += cost_csv_row(s) + "\n";
    return out;
}

// Experiments --------------------------------------------------------------

namespace {

constexpr double kMonotoneSlack = 1e-10;
constexpr double kExactLoss = 1e-10;
constexpr double kAgreement = 1e-8;
constexpr double kAngle = 1e-10;

void loss_checks(ExperimentReport& r, const SynthData& synth, double loss, const std::vector<double>& trace) {
    const double norm2 = std::pow(synth.data.frobenius_norm(), 2);
    const double scale = std::max(norm2, std::numeric_limits<double>::min());
    r.metrics["data_norm2"] = norm2;
    r.metrics["loss"] = loss;
    r.metrics["relative_loss"] = loss / scale;
    r.series["loss_trace"] = trace;
    r.add_check(make_check("loss_trace_monotone", max_increase(trace) / scale, "<=", kMonotoneSlack));
    const double noise2 = std::pow((synth.data - synth.signal).frobenius_norm(), 2);
    r.metrics["noise_energy"] = noise2;
    if (noise2 == 0.0) r.add_check(make_check("relative_loss", loss / scale, "<", kExactLoss));
    else r.add_check(make_check("relative_loss_within_noise", loss / scale, "<=", noise2 / scale));
}

RankSpec truth_ranks(const FactorModel& truth) { return RankSpec::fixed(truth.ranks()); }

std::vector<RankSpec> truth_segment_ranks(const BlockFactorModel& truth) {
    std::vector<RankSpec> out;
    for (const auto& seg : truth.segments) out.push_back(RankSpec::fixed(seg.ranks()));
    return out;
}

const SynthData& require_block(const SynthData& synth, const char* kind) {
    if (!synth.block_truth) throw ConfigError(std::string(kind) + " experiment needs a part-structured config");
    return synth;
}

void run_flat(ExperimentReport& r, const ExperimentOptions& o, const SynthData& synth) {
    const RankSpec ranks = synth.flat_truth ? truth_ranks(*synth.flat_truth) : RankSpec::full();
    const auto initial = mmode_svd(synth.data, ranks);
    const auto refined = hooi_refine(synth.data, initial, o.eps, o.max_iters);
    r.metrics["sweeps"] = static_cast<double>(refined.sweeps);
    r.metrics["converged"] = refined.converged ? 1.0 : 0.0;
    r.metrics["signal_relative_error"] = relative_error(reconstruct(refined.model), synth.signal);
    loss_checks(r, synth, squared_loss(synth.data, refined.model), refined.loss_trace);
}

void run_block(ExperimentReport& r, const ExperimentOptions& o, const SynthData& synth) {
    const auto& truth = *require_block(synth, "block").block_truth;
    BlockSolverConfig cfg;
    cfg.eps = o.eps;
    cfg.max_iters = o.max_iters;
    cfg.parallel = o.parallel;
    cfg.segment_ranks = truth_segment_ranks(truth);
    const auto model = block_mmode_svd(synth.data, truth.hierarchy, cfg);
    r.metrics["sweeps"] = static_cast<double>(model.report.sweeps);
    r.metrics["converged"] = model.report.converged ? 1.0 : 0.0;
    r.metrics["segments"] = static_cast<double>(model.segment_count());
    r.metrics["singular_sweeps"] = static_cast<double>(model.report.singular_sweeps.size());
    const auto recon = reconstruct(model);
    r.metrics["signal_relative_error"] = relative_error(recon, synth.signal);
    loss_checks(r, synth, squared_loss(synth.data, model), model.report.loss_trace);

    bool shared = false;
    for (std::size_t c = 1; c < synth.data.order(); ++c) shared = shared || model.shared(c);
    if (truth.hierarchy.leaves_disjoint() && !shared) {
        const auto parts = factorize_independent_parts(synth.data, truth.hierarchy, RankSpec::full(), cfg);
        r.add_check(make_check("block_vs_independent_parts", relative_error(recon, reconstruct(parts)), "<",
                               kAgreement));
    }
}

void run_incremental(ExperimentReport& r, const ExperimentOptions& o, const SynthData& synth,
                     const SynthConfig& cfg) {
    const HierarchySpec spec =
        cfg.block_truth() ? cfg.hierarchy_spec() : uniform_subdivision(cfg.measurement, 3);
    IncrementalOptions opts;
    opts.parallel = o.parallel;
    const auto inc = incremental_block_svd(synth.data, spec, opts);
    const auto batch = mmode_svd(synth.data, RankSpec::full());
    const auto inc_recon = inc.reconstruct();
    r.metrics["nodes"] = static_cast<double>(spec.node_count());
    r.metrics["reconstruction_relative_error"] = relative_error(inc_recon, synth.data);
    r.add_check(make_check("root_vs_batch", relative_error(inc_recon, reconstruct(batch)), "<", kAgreement));

    const auto& root = inc.root();
    std::vector<ChildFactorization> children;
    for (auto ch : spec.node(spec.root()).children) children.push_back(inc.nodes[ch]);
    if (inc.new_data[spec.root()]) children.push_back(*inc.new_data[spec.root()]);

    double batch_angle = 0.0, merge_angle = 0.0;
    for (std::size_t c = 1; c < synth.data.order(); ++c) {
        const Matrix& u = root.u[c];
        batch_angle = std::max(batch_angle, max_principal_angle(u, batch.modes[c].leftCols(u.cols())));
        if (!children.empty()) {
            IncrementalOptions direct = opts;
            direct.direct_merge = true;
            const auto qr = merge_children_mode(c, children, opts);
            const auto svd = merge_children_mode(c, children, direct);
            merge_angle = std::max(merge_angle, max_principal_angle(qr.u, svd.u));
        }
    }
    r.add_check(make_check("incremental_vs_batch_angle", batch_angle, "<", kAngle));
    r.add_check(make_check("merge_qr_vs_direct_angle", merge_angle, "<", kAngle));
}

void run_occlusion(ExperimentReport& r, const ExperimentOptions& o, const SynthData& synth,
                   const SynthConfig& cfg) {
    const auto& truth = *require_block(synth, "occlusion").block_truth;
    const auto& spec = truth.hierarchy;
    BlockSolverConfig bcfg;
    bcfg.parallel = o.parallel;
    const auto block = factorize_independent_parts(synth.data, spec, RankSpec::full(), bcfg);
    const auto whole = mmode_svd(synth.data, RankSpec::full());
    const auto observations = enumerate_observations(synth.data);
    const double rms = synth.data.frobenius_norm() / std::sqrt(static_cast<double>(synth.data.size()));
    const std::size_t i0 = synth.data.extent(0);

    std::vector<double> block_acc, whole_acc;
    double worst_margin = std::numeric_limits<double>::infinity();
    std::size_t strict = 0;
    for (std::size_t t = 0; t < o.trials; ++t) {
        const auto& seg = block.segments[t % block.segment_count()];
        std::vector<bool> visible(i0, true);
        for (auto i : seg.support) visible[i] = false;
        std::mt19937_64 rng(cfg.seed + 0x9E3779B97F4A7C15ULL * (t + 1));
        std::normal_distribution<double> occluder(0.0, rms);

        std::size_t block_hits = 0, whole_hits = 0, total = 0;
        for (const auto& obs : observations) {
            Vector d = obs.values;
            for (auto i : seg.support) d(idx(i)) = occluder(rng);
            total += obs.labels.size();
            block_hits += correct_labels(project_block(block, d, visible).labels, obs.labels);
            try {
                whole_hits += correct_labels(infer_labels(multilinear_project(whole, d), whole), obs.labels);
            } catch (const NumericalError&) {
            }
        }
        const double b = static_cast<double>(block_hits) / static_cast<double>(total);
        const double w = static_cast<double>(whole_hits) / static_cast<double>(total);
        block_acc.push_back(b);
        whole_acc.push_back(w);
        worst_margin = std::min(worst_margin, b - w);
        strict += b > w;
    }
    r.series["block_accuracy"] = block_acc;
    r.series["whole_accuracy"] = whole_acc;
    double bsum = 0.0, wsum = 0.0;
    for (std::size_t t = 0; t < block_acc.size(); ++t) {
        bsum += block_acc[t];
        wsum += whole_acc[t];
    }
    const double n = static_cast<double>(std::max<std::size_t>(block_acc.size(), 1));
    r.metrics["block_accuracy_mean"] = bsum / n;
    r.metrics["whole_accuracy_mean"] = wsum / n;
    r.metrics["trials"] = static_cast<double>(o.trials);
    r.add_check(make_check("block_not_worse_than_whole", worst_margin, ">=", 0.0));
    r.add_check(make_check("trials_block_strictly_better", static_cast<double>(strict), ">=", 1.0));
}

void run_bench(ExperimentReport& r, const ExperimentOptions& o) {
    const auto samples = bench_cost(o.order, o.sizes, o.threads, o.block, o.synth.seed);
    for (const auto& s : samples) {
        const std::string tag = "N" + std::to_string(s.n);
        r.metrics[tag + "_segments_predicted"] = s.s_predicted;
        r.metrics[tag + "_segments_measured"] = static_cast<double>(s.s_measured);
        r.metrics[tag + "_wall_time_serial"] = s.wall_time_serial;
        r.metrics[tag + "_wall_time_parallel"] = s.wall_time_parallel;
        r.metrics[tag + "_speedup"] = s.wall_time_parallel > 0 ? s.wall_time_serial / s.wall_time_parallel : 0.0;
        r.add_check(make_check(tag + "_segment_count_gap", static_cast<double>(s.s_measured) - s.s_predicted, "==",
                               0.0));
    }
}

} // namespace

ExperimentReport run_experiment(const std::string& kind, const ExperimentOptions& options) {
    static const std::vector<std::string> kinds{"flat", "block", "incremental", "occlusion", "bench"};
    if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end())
        throw ConfigError("unknown experiment kind \"" + kind + "\" (flat, block, incremental, occlusion, bench)");

    ExperimentReport r;
    r.kind = kind;
    r.config = options.to_json(kind);
    r.config_hash = fnv1a_hex(r.config);
    r.id = kind + "-" + r.config_hash.substr(0, 8);

    if (kind == "bench") {
        run_bench(r, options);
        return r;
    }
    const auto synth = synth_generate(options.synth);
    if (kind == "flat") run_flat(r, options, synth);
    else if (kind == "block") run_block(r, options, synth);
    else if (kind == "incremental") run_incremental(r, options, synth, options.synth);
    else run_occlusion(r, options, synth, options.synth);
    return r;
}

} // namespace mmb
