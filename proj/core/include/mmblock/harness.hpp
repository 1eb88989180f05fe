#pragma once

#include "mmblock/block_svd.hpp"
#include "mmblock/factor_model.hpp"
#include "mmblock/hierarchy.hpp"
#include "mmblock/incremental.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mmb {

/**
 * Synthetic data from the structural equation
 * D = Z x_0 U_0 x_1 U_1 ... x_C U_C + noise, enumerated over every
 * combination of factor values.
 *
 * With `parts` > 0 (or a hierarchy) the ground truth is a block model: each
 * leaf segment has its own U_0s, core and, for fully compositional factors,
 * its own U_cs.
 */
struct SynthConfig {
    std::size_t measurement = 64;
    std::vector<std::size_t> factors{5, 4, 3};
    /// J_0, J_1, ..., J_C; empty means full. J_0 is capped by prod J_c (and
    /// the segment size for block truth).
    std::vector<std::size_t> ranks;
    double noise = 0.0;
    std::uint64_t seed = 1;
    /// Number of equal contiguous parts of mode 0; 0 = flat truth.
    std::size_t parts = 0;
    /// Hierarchy JSON; overrides `parts` when non-empty.
    std::string hierarchy;
    std::vector<Compositionality> compositional;

    [[nodiscard]] Shape shape() const;
    [[nodiscard]] bool block_truth() const noexcept { return parts > 0 || !hierarchy.empty(); }
    /// Hierarchy of the block truth (throws ConfigError for a flat config).
    [[nodiscard]] HierarchySpec hierarchy_spec() const;
    void validate() const;
};

/// I_0 = 64 split into 2 parts, factors (4, 3, 2).
SynthConfig default_part_config();

std::string synth_config_to_json(const SynthConfig& config);
SynthConfig synth_config_from_json(const std::string& text);

struct SynthData {
    DenseTensor data;
    /// Noise-free tensor.
    DenseTensor signal;
    std::optional<FactorModel> flat_truth;
    std::optional<BlockFactorModel> block_truth;
};

SynthData synth_generate(const SynthConfig& config);

struct CheckResult {
    std::string name;
    double value = 0.0;
    double tolerance = 0.0;
    /// "<", "<=", ">=", ">" or "==".
    std::string relation;
    bool pass = false;
};

CheckResult make_check(std::string name, double value, std::string relation, double tolerance);

struct ExperimentReport {
    std::string id;
    std::string kind;
    /// FNV-1a 64 of the canonical config JSON, hex.
    std::string config_hash;
    std::string config;
    std::map<std::string, double> metrics;
    std::map<std::string, std::vector<double>> series;
    std::vector<CheckResult> checks;
    std::map<std::string, double> tolerances;

    [[nodiscard]] bool all_pass() const;
    void add_check(CheckResult check);

    [[nodiscard]] std::string to_json() const;
    static ExperimentReport from_json(const std::string& text);
    /// section,name,value,tolerance,relation,pass
    [[nodiscard]] std::string to_csv() const;
};

std::string fnv1a_hex(const std::string& text);

struct ExperimentOptions {
    SynthConfig synth;
    /// Solver sweeps and stopping threshold (block kind).
    std::size_t max_iters = 100;
    double eps = 1e-10;
    bool parallel = false;
    /// Occlusion trials.
    std::size_t trials = 20;
    /// bench: tensor order and entry counts.
    std::size_t order = 2;
    std::vector<std::size_t> sizes{16, 64};
    std::size_t threads = 4;
    std::size_t block = 2;

    [[nodiscard]] std::string to_json(const std::string& kind) const;
};

/// Kinds: flat, block, incremental, occlusion, bench. Throws ConfigError for
/// an unknown kind.
ExperimentReport run_experiment(const std::string& kind, const ExperimentOptions& options);

/// Rejects entry counts that are not powers of 2^M.
std::vector<CostSample> bench_cost(std::size_t order, const std::vector<std::size_t>& sizes, std::size_t threads = 4,
                                   std::size_t block = 2, std::uint64_t seed = 1);
std::string bench_csv(const std::vector<CostSample>& samples);

/// One mode-0 fiber with the factor values it was observed under.
struct LabeledObservation {
    std::vector<std::size_t> labels;
    Vector values;
};
std::vector<LabeledObservation> enumerate_observations(const DenseTensor& data);

/// Fraction of factor labels inferred correctly over all observations.
double label_accuracy(const FactorModel& model, const std::vector<LabeledObservation>& observations);

} // namespace mmb
