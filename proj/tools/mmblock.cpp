// mmblock: command-line front end for synthesis, factorization, projection,
// benchmarks and experiments. Exit codes: 0 all checks pass, 1 a check failed,
// 2 usage or configuration error, 3 numerical error.

#include "mmblock/dten.hpp"
#include "mmblock/error.hpp"
#include "mmblock/harness.hpp"
#include "mmblock/model_io.hpp"
#include "mmblock/projection.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr int kExitChecksFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

std::string read_text(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw mmb::ConfigError("cannot read " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw mmb::ConfigError("cannot write " + path.string());
    out << text;
}

mmb::DenseTensor read_tensor(const fs::path& path) {
    if (!fs::exists(path)) throw mmb::ConfigError("tensor file not found: " + path.string());
    return mmb::read_dten(path);
}

json parse(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw mmb::ConfigError("invalid " + what + ": " + e.what());
    }
}

/// "full", [J_0, ...], {"fixed": [...]} or {"energy": tau}.
mmb::RankSpec parse_ranks(const std::string& path) {
    if (path.empty()) return mmb::RankSpec::full();
    const json j = parse(read_text(path), "ranks file");
    try {
        if (j.is_string() && j.get<std::string>() == "full") return mmb::RankSpec::full();
        if (j.is_array()) return mmb::RankSpec::fixed(j.get<std::vector<std::size_t>>());
        if (j.is_object() && j.contains("fixed")) return mmb::RankSpec::fixed(j["fixed"].get<std::vector<std::size_t>>());
        if (j.is_object() && j.contains("energy")) return mmb::RankSpec::energy(j["energy"].get<double>());
    } catch (const json::exception& e) {
        throw mmb::ConfigError(std::string("ranks file: ") + e.what());
    }
    throw mmb::ConfigError("ranks file must be \"full\", a list, {\"fixed\": [...]} or {\"energy\": tau}");
}

/// [bool, ...], {"visible": [bool, ...]} or {"occluded": [index, ...]}.
std::vector<bool> parse_mask(const std::string& path, std::size_t extent) {
    std::vector<bool> visible(extent, true);
    if (path.empty()) return visible;
    const json j = parse(read_text(path), "mask file");
    try {
        if (j.is_array() || (j.is_object() && j.contains("visible"))) {
            const auto flags = (j.is_array() ? j : j["visible"]).get<std::vector<bool>>();
            if (flags.size() != extent) throw mmb::DimensionError("mask length does not match I_0");
            return flags;
        }
        if (j.is_object() && j.contains("occluded")) {
            for (auto i : j["occluded"].get<std::vector<std::size_t>>()) {
                if (i >= extent) throw mmb::DimensionError("occluded index out of range");
                visible[i] = false;
            }
            return visible;
        }
    } catch (const json::exception& e) {
        throw mmb::ConfigError(std::string("mask file: ") + e.what());
    }
    throw mmb::ConfigError("mask file must be a list of flags, {\"visible\": [...]} or {\"occluded\": [...]}");
}

mmb::ExperimentReport start_report(const std::string& kind, const json& config) {
    mmb::ExperimentReport r;
    r.kind = kind;
    r.config = config.dump();
    r.config_hash = mmb::fnv1a_hex(r.config);
    r.id = kind + "-" + r.config_hash.substr(0, 8);
    return r;
}

int finish(const mmb::ExperimentReport& r, const std::string& report_path, const std::string& csv_path) {
    if (report_path.empty()) std::cout << r.to_json();
    else write_text(report_path, r.to_json());
    if (!csv_path.empty()) write_text(csv_path, r.to_csv());
    for (const auto& c : r.checks)
        if (!c.pass) std::cerr << "check failed: " << c.name << " = " << c.value << " (want " << c.relation << ' ' << c.tolerance << ")\n";
    return r.all_pass() ? 0 : kExitChecksFailed;
}

double max_increase(const std::vector<double>& trace) {
    double worst = 0.0;
    for (std::size_t i = 1; i < trace.size(); ++i) worst = std::max(worst, trace[i] - trace[i - 1]);
    return worst;
}

struct Paths {
    std::string config, tensor, hierarchy, ranks, out, model, obs, mask, report, csv, truth;
};

int cmd_synth(const Paths& p) {
    const auto cfg = p.config.empty() ? mmb::SynthConfig{} : mmb::synth_config_from_json(read_text(p.config));
    const auto data = mmb::synth_generate(cfg);
    mmb::write_dten(fs::path(p.out), data.data);
    if (!p.truth.empty()) {
        if (data.flat_truth) mmb::save_model(p.truth, *data.flat_truth);
        else mmb::save_model(p.truth, *data.block_truth);
    }
    auto r = start_report("synth", parse(mmb::synth_config_to_json(cfg), "config"));
    r.metrics["entries"] = static_cast<double>(data.data.size());
    r.metrics["norm"] = data.data.frobenius_norm();
    return finish(r, p.report, p.csv);
}

struct SolveFlags {
    std::string mode = "flat";
    std::size_t max_iters = 100;
    double eps = 1e-10;
    bool parallel = false;
    bool center = false;
    bool penalty = false;
};

int cmd_factorize(const Paths& p, const SolveFlags& f) {
    const auto data = read_tensor(p.tensor);
    const auto ranks = parse_ranks(p.ranks);
    json config{{"mode", f.mode}, {"tensor", p.tensor}, {"hierarchy", p.hierarchy}, {"ranks", p.ranks},
                {"max_iters", f.max_iters}, {"eps", f.eps}, {"center", f.center}, {"penalty", f.penalty}};
    auto r = start_report("factorize", config);
    const double norm2 = std::pow(data.frobenius_norm(), 2);
    const double scale = norm2 > 0 ? norm2 : 1.0;
    std::vector<double> trace;
    double loss = 0.0;
    if (f.mode == "flat") {
        mmb::MmodeSvdOptions opts;
        opts.center = f.center;
        const auto refined = mmb::hooi_refine(data, mmb::mmode_svd(data, ranks, opts), f.eps, f.max_iters);
        trace = refined.loss_trace;
        loss = trace.empty() ? 0.0 : trace.back();
        r.metrics["sweeps"] = static_cast<double>(refined.sweeps);
        mmb::save_model(p.out, refined.model);
    } else if (f.mode == "block") {
        if (p.hierarchy.empty()) throw mmb::ConfigError("--mode block needs --hierarchy");
        const auto spec = mmb::hierarchy_from_json(read_text(p.hierarchy), data.extent(0));
        mmb::BlockSolverConfig cfg;
        cfg.ranks = ranks;
        cfg.max_iters = f.max_iters;
        cfg.eps = f.eps;
        cfg.parallel = f.parallel;
        if (f.penalty) cfg.orthonormalization = mmb::Orthonormalization::penalty;
        const auto model = mmb::block_mmode_svd(data, spec, cfg);
        trace = model.report.loss_trace;
        loss = mmb::squared_loss(data, model);
        r.metrics["sweeps"] = static_cast<double>(model.report.sweeps);
        r.metrics["converged"] = model.report.converged ? 1.0 : 0.0;
        r.metrics["segments"] = static_cast<double>(model.segment_count());
        mmb::save_model(p.out, model);
    } else {
        throw mmb::ConfigError("--mode must be flat or block");
    }
    r.metrics["loss"] = loss;
    r.metrics["relative_loss"] = loss / scale;
    r.series["loss_trace"] = trace;
    r.add_check(mmb::make_check("loss_trace_monotone", max_increase(trace) / scale, "<=", 1e-10));
    return finish(r, p.report, p.csv);
}

int cmd_incremental(const Paths& p, const SolveFlags& f) {
    const auto data = read_tensor(p.tensor);
    if (p.hierarchy.empty()) throw mmb::ConfigError("incremental needs --hierarchy");
    const auto spec = mmb::hierarchy_from_json(read_text(p.hierarchy), data.extent(0));
    mmb::IncrementalOptions opts;
    opts.ranks = parse_ranks(p.ranks);
    opts.parallel = f.parallel;
    const auto model = mmb::incremental_block_svd(data, spec, opts);
    mmb::save_model(p.out, model.to_factor_model());
    mmb::save_model(fs::path(p.out) / "leaves", model.to_block_model());
    auto r = start_report("incremental", json{{"tensor", p.tensor}, {"hierarchy", p.hierarchy}, {"ranks", p.ranks}});
    r.metrics["nodes"] = static_cast<double>(spec.node_count());
    r.metrics["relative_error"] = mmb::relative_error(model.reconstruct(), data);
    const auto bank = spec.leaf_bank();
    r.add_check(mmb::make_check("leaf_bank_deviation", bank.max_deviation, "<=", mmb::kBankTolerance));
    return finish(r, p.report, p.csv);
}

int cmd_project(const Paths& p) {
    const auto loaded = mmb::load_model(p.model);
    const auto obs = read_tensor(p.obs);
    if (obs.order() != 1 && obs.order() != 2) throw mmb::DimensionError("observations must be a vector or an I_0 x n matrix");
    const mmb::Matrix columns = obs.order() == 1 ? mmb::Matrix(mmb::to_vector(obs)) : mmb::to_matrix(obs);
    const std::size_t extent = static_cast<std::size_t>(columns.rows());
    const auto visible = parse_mask(p.mask, extent);

    auto r = start_report("project", json{{"model", p.model}, {"obs", p.obs}, {"mask", p.mask}});
    json results = json::array();
    std::size_t low = 0;
    for (Eigen::Index k = 0; k < columns.cols(); ++k) {
        const mmb::Vector d = columns.col(k);
        std::vector<mmb::LabelGuess> labels;
        if (loaded.is_block()) {
            labels = mmb::project_block(*loaded.block, d, visible).labels;
        } else {
            if (!p.mask.empty()) throw mmb::ConfigError("--mask needs a block model");
            labels = mmb::infer_labels(mmb::multilinear_project(*loaded.flat, d), *loaded.flat);
        }
        json entry = json::array();
        for (const auto& l : labels) {
            entry.push_back({{"index", l.index}, {"score", l.score}, {"low_confidence", l.low_confidence}});
            low += l.low_confidence;
            r.series["observation" + std::to_string(k)].push_back(static_cast<double>(l.index));
        }
        results.push_back(entry);
    }
    if (!p.out.empty()) write_text(p.out, results.dump(2) + "\n");
    r.metrics["observations"] = static_cast<double>(columns.cols());
    r.add_check(mmb::make_check("low_confidence_labels", static_cast<double>(low), "==", 0.0));
    return finish(r, p.report, p.csv);
}

struct BenchFlags {
    std::size_t order = 2;
    std::vector<std::size_t> sizes{16, 64};
    std::size_t threads = 4;
    std::size_t block = 2;
    std::uint64_t seed = 1;
};

int cmd_bench(const Paths& p, const BenchFlags& b) {
    const auto samples = mmb::bench_cost(b.order, b.sizes, b.threads, b.block, b.seed);
    const auto csv = mmb::bench_csv(samples);
    if (p.out.empty()) std::cout << csv;
    else write_text(p.out, csv);
    auto r = start_report("bench", json{{"order", b.order}, {"sizes", b.sizes}, {"threads", b.threads}, {"block", b.block}});
    for (const auto& s : samples) {
        r.add_check(mmb::make_check("N" + std::to_string(s.n) + "_segment_count_gap",
                                    static_cast<double>(s.s_measured) - s.s_predicted, "==", 0.0));
    }
    // The CSV already went to stdout; the report only goes to a file.
    if (p.report.empty()) {
        for (const auto& c : r.checks)
            if (!c.pass) std::cerr << "check failed: " << c.name << " = " << c.value << '\n';
        return r.all_pass() ? 0 : kExitChecksFailed;
    }
    return finish(r, p.report, p.csv);
}

int cmd_experiment(const Paths& p, const std::string& kind, mmb::ExperimentOptions o) {
    if (!p.config.empty()) {
        o.synth = mmb::synth_config_from_json(read_text(p.config));
    } else if (kind == "block" || kind == "occlusion") {
        o.synth = mmb::default_part_config();
    }
    return finish(mmb::run_experiment(kind, o), p.report, p.csv);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Block multilinear factorization toolkit"};
    app.require_subcommand(1);
    Paths p;
    SolveFlags solve;
    BenchFlags bench;
    mmb::ExperimentOptions exp;
    std::string kind;

    auto add_report = [&](CLI::App* sub) {
        sub->add_option("--report", p.report, "Write the JSON report here instead of stdout");
        sub->add_option("--csv", p.csv, "Also write the report as CSV");
    };

    auto* synth = app.add_subcommand("synth", "Generate a synthetic data tensor");
    synth->add_option("--config", p.config, "Synthetic config JSON")->check(CLI::ExistingFile);
    synth->add_option("--out", p.out, "Output DTEN file")->required();
    synth->add_option("--truth", p.truth, "Also save the ground-truth model to this directory");
    add_report(synth);

    auto* fact = app.add_subcommand("factorize", "Flat or block factorization");
    fact->add_option("--mode", solve.mode, "flat or block")->check(CLI::IsMember({"flat", "block"}));
    fact->add_option("--tensor", p.tensor, "Input DTEN file")->required();
    fact->add_option("--hierarchy", p.hierarchy, "Hierarchy JSON (block mode)");
    fact->add_option("--ranks", p.ranks, "Ranks JSON");
    fact->add_option("--out", p.out, "Model directory")->required();
    fact->add_option("--max-iters", solve.max_iters, "Sweep limit");
    fact->add_option("--eps", solve.eps, "Relative loss-decrease threshold");
    fact->add_flag("--parallel", solve.parallel, "Factorize segments on separate threads");
    fact->add_flag("--center", solve.center, "Subtract the mean observation (flat mode)");
    fact->add_flag("--penalty", solve.penalty, "Penalized orthonormality (block mode)");
    add_report(fact);

    auto* inc = app.add_subcommand("incremental", "Bottom-up incremental factorization");
    inc->add_option("--tensor", p.tensor, "Input DTEN file")->required();
    inc->add_option("--hierarchy", p.hierarchy, "Hierarchy JSON")->required();
    inc->add_option("--ranks", p.ranks, "Ranks JSON");
    inc->add_option("--out", p.out, "Model directory")->required();
    inc->add_flag("--parallel", solve.parallel, "Merge sibling subtrees on separate threads");
    add_report(inc);

    auto* proj = app.add_subcommand("project", "Infer factor labels of new observations");
    proj->add_option("--model", p.model, "Model directory")->required();
    proj->add_option("--obs", p.obs, "Observation DTEN (vector or I_0 x n)")->required();
    proj->add_option("--mask", p.mask, "Visibility mask JSON");
    proj->add_option("--out", p.out, "Write labels JSON here");
    add_report(proj);

    auto* bn = app.add_subcommand("bench", "Predicted vs measured subdivision cost (CSV)");
    bn->add_option("--order", bench.order, "Tensor order M")->required();
    bn->add_option("--sizes", bench.sizes, "Entry counts N (powers of 2^M)")->delimiter(',');
    bn->add_option("--threads", bench.threads, "Worker threads");
    bn->add_option("--block", bench.block, "Samples per entry and mode");
    bn->add_option("--seed", bench.seed, "Data seed");
    bn->add_option("--out", p.out, "Write CSV here instead of stdout");
    add_report(bn);

    auto* ex = app.add_subcommand("experiment", "Run a named experiment and its checks");
    ex->add_option("--kind", kind, "flat, block, incremental, occlusion or bench")->required();
    ex->add_option("--config", p.config, "Synthetic config JSON")->check(CLI::ExistingFile);
    ex->add_option("--max-iters", exp.max_iters, "Sweep limit");
    ex->add_option("--eps", exp.eps, "Relative loss-decrease threshold");
    ex->add_flag("--parallel", exp.parallel, "Sibling-segment parallelism");
    ex->add_option("--trials", exp.trials, "Occlusion trials");
    ex->add_option("--order", exp.order, "bench: tensor order");
    ex->add_option("--sizes", exp.sizes, "bench: entry counts")->delimiter(',');
    ex->add_option("--threads", exp.threads, "bench: worker threads");
    add_report(ex);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*synth) return cmd_synth(p);
        if (*fact) return cmd_factorize(p, solve);
        if (*inc) return cmd_incremental(p, solve);
        if (*proj) return cmd_project(p);
        if (*bn) return cmd_bench(p, bench);
        return cmd_experiment(p, kind, exp);
    } catch (const mmb::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const mmb::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const mmb::DimensionError& e) {
        std::cerr << "dimension error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumerical;
    }
}
