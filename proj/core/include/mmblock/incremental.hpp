#pragma once

#include "mmblock/block_svd.hpp"
#include "mmblock/factor_model.hpp"
#include "mmblock/hierarchy.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mmb {

/**
 * Factorization of one node over the causal modes c = 1..C. The measurement
 * mode stays inside the extended core: D_k ~ T_k x_1 U_1 ... x_C U_C, with
 * T_k zero outside the node's mode-0 support.
 *
 * Index 0 of the per-mode vectors is unused (empty) so that modes keep their
 * tensor numbering.
 */
struct ChildFactorization {
    std::vector<std::size_t> support;
    std::vector<Matrix> u;
    std::vector<Vector> sigma;
    /// Right singular vectors: of D_k[c] for a leaf, of the merged
    /// [U_1 Sigma_1 | ...] for a parent (child blocks stacked by rows).
    std::vector<Matrix> v;
    DenseTensor core;
    /// core x_c Sigma_c^{-1} over every causal mode.
    DenseTensor normalized_core;
    /// Energy dropped by this node's own truncation, summed over modes.
    double truncation = 0.0;

    [[nodiscard]] std::size_t order() const noexcept { return core.order(); }
    [[nodiscard]] DenseTensor reconstruct() const;
    /// Flat model with U_0 = I.
    [[nodiscard]] FactorModel to_factor_model() const;
};

struct MergedMode {
    Matrix u;
    Vector sigma;
    /// V block of each child (J_k x J_w).
    std::vector<Matrix> v_blocks;
    /// sqrt of the discarded sigma^2.
    double truncation = 0.0;
};

struct IncrementalOptions {
    /// Ranks of leaf and merged factors; modes with zero singular values are
    /// always truncated.
    RankSpec ranks = RankSpec::full();
    /// Merge by direct SVD of the concatenation instead of QR + SVD of R.
    bool direct_merge = false;
    /// Factorize sibling subtrees on separate threads.
    bool parallel = false;
    /// Upper bound on concurrently running threads (0 = hardware concurrency).
    std::size_t max_threads = 0;
};

/// Per-mode SVD of a leaf tensor. Throws NumericalError when a mode keeps no
/// positive singular value (e.g. a zero leaf).
ChildFactorization leaf_factorize(const DenseTensor& leaf, const std::vector<std::size_t>& support,
                                  const RankSpec& ranks = RankSpec::full());

/// Left singular basis of [U_{c,1} Sigma_{c,1} | ... | U_{c,K} Sigma_{c,K}].
MergedMode merge_children_mode(std::size_t mode, const std::vector<ChildFactorization>& children,
                               const IncrementalOptions& options = {});

/// T_w = sum_k That_k x_c (Sigma_cw V_cwk^T) over every causal mode.
DenseTensor parent_core(const std::vector<ChildFactorization>& children, const std::vector<MergedMode>& merged);

/// merge_children_mode for every causal mode plus parent_core.
ChildFactorization merge_children(const std::vector<ChildFactorization>& children,
                                  const std::vector<std::size_t>& support, const IncrementalOptions& options = {});

/// Factorization of every hierarchy node, built bottom-up.
struct IncrementalModel {
    HierarchySpec hierarchy;
    Shape data_shape;
    /// Indexed like hierarchy nodes.
    std::vector<ChildFactorization> nodes;
    /// Node index -> factorization of the mode-0 rows its children miss.
    std::vector<std::optional<ChildFactorization>> new_data;

    [[nodiscard]] const ChildFactorization& root() const { return nodes.at(hierarchy.root()); }
    [[nodiscard]] DenseTensor reconstruct() const { return root().reconstruct(); }
    [[nodiscard]] FactorModel to_factor_model() const { return root().to_factor_model(); }
    /// One segment per leaf (U_0s selects the support rows), or a single
    /// segment for the root when leaves_only is false.
    [[nodiscard]] BlockFactorModel to_block_model(bool leaves_only = true) const;
};

/**
 * Bottom-up merge over the hierarchy. Leaves are factorized directly; a
 * parent merges its children plus a new-data child covering any part of its
 * support that no child covers. Leaf supports must be disjoint.
 */
IncrementalModel incremental_block_svd(const DenseTensor& data, const HierarchySpec& spec,
                                       const IncrementalOptions& options = {});

/**
 * Sequential update: factorizes `batch` on `support` (rows not yet covered by
 * the root) and merges it into the root as one more child.
 */
IncrementalModel append_batch(const IncrementalModel& model, const DenseTensor& batch,
                              const std::vector<std::size_t>& support, const IncrementalOptions& options = {});

/// Left-multiplies every segment's measurement-mode matrix by its filter
/// (empty matrix = identity).
BlockFactorModel apply_general_filters(const BlockFactorModel& model, const std::vector<Matrix>& filters);
BlockFactorModel apply_general_filters(const BlockFactorModel& model, const std::vector<SegmentFilter>& filters);

/**
 * Cost of full recursive 2^M-ary subdivision of N entries:
 * K = 2^M, levels = log_K N + 1, S = N log_K N + 1, serial cost T N log_K N,
 * distributed cost T log_K N. When N is not a power of K the logarithm is
 * rounded up and `conforming` is false.
 */
struct CostModel {
    std::size_t n = 0;
    std::size_t m = 0;
    std::size_t k = 0;
    double t = 0.0;
    double log_k_n = 0.0;
    std::size_t levels = 0;
    double segments = 0.0;
    double serial_cost = 0.0;
    double distributed_cost = 0.0;
    bool conforming = true;
};

CostModel predict_cost(std::size_t n, std::size_t m, double t = 1.0);

/// Shape of an order-M box holding N entries, powers of two spread from mode 0.
Shape subdivision_shape(std::size_t n, std::size_t m);

/// Boxes of the full recursive subdivision: every box with an extent above 1
/// halves each such extent, until all boxes are single entries.
struct SubdivisionBox {
    std::vector<std::size_t> offset;
    Shape shape;
    std::size_t level = 0;
};
std::vector<SubdivisionBox> enumerate_subdivision(std::size_t n, std::size_t m);

struct CostSample {
    std::size_t n = 0;
    std::size_t m = 0;
    std::size_t k = 0;
    double s_predicted = 0.0;
    std::size_t s_measured = 0;
    double wall_time_serial = 0.0;
    double wall_time_parallel = 0.0;
};

/**
 * Times an M-mode SVD on every box of the subdivision, serially and level by
 * level on `threads` threads. Each entry is a block of `block` samples per
 * mode so that the segment work is not trivial.
 */
CostSample measure_cost(std::size_t n, std::size_t m, std::size_t threads = 4, std::size_t block = 2,
                        unsigned long long seed = 1);

std::string cost_csv_header();
std::string cost_csv_row(const CostSample& sample);

} // namespace mmb
