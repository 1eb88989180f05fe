#pragma once

#include "mmblock/tensor.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mmb {

/**
 * Segment filter H_s = F_s S_s acting on the measurement mode.
 *
 * S_s is the segmentation: an identity restricted to `support`. A general
 * filter additionally applies F_s, a |support| x |support| matrix, inside the
 * support. A block-identity filter has no F_s.
 */
class SegmentFilter {
public:
    enum class Kind { block_identity, general };

    SegmentFilter() = default;

    static SegmentFilter identity(std::size_t extent);
    static SegmentFilter block(std::vector<std::size_t> support);
    static SegmentFilter range(std::size_t start, std::size_t length);
    static SegmentFilter general(std::vector<std::size_t> support, Matrix filter, std::string label = {});

    [[nodiscard]] Kind kind() const noexcept { return kind_; }
    [[nodiscard]] const std::vector<std::size_t>& support() const noexcept { return support_; }
    [[nodiscard]] const Matrix& filter() const noexcept { return filter_; }
    /// Config-file spelling ("identity", "pyramid:1", ...); may be empty.
    [[nodiscard]] const std::string& label() const noexcept { return label_; }

    /// H as an extent x extent matrix.
    [[nodiscard]] Matrix matrix(std::size_t extent) const;
    /// S as an extent x extent 0/1 diagonal matrix.
    [[nodiscard]] Matrix segmentation(std::size_t extent) const;
    /// F embedded into extent x extent (identity on the support for block filters).
    [[nodiscard]] Matrix general_part(std::size_t extent) const;

    [[nodiscard]] bool contains(std::size_t index) const;
    [[nodiscard]] std::size_t first_index() const { return support_.empty() ? 0 : support_.front(); }

private:
    Kind kind_ = Kind::block_identity;
    std::vector<std::size_t> support_;
    Matrix filter_;
    std::string label_;
};

/// D_s = D x_0 H_s. Block-identity filters are applied as a masked copy.
DenseTensor segment(const DenseTensor& data, const SegmentFilter& filter);

struct BankReport {
    /// max |(sum_s H_s - I)_ij|
    double max_deviation = 0.0;
    bool pass = false;
};

inline constexpr double kBankTolerance = 1e-12;

/// Checks that the filters sum to the identity on a mode of size extent.
BankReport validate_bank(const std::vector<SegmentFilter>& filters, std::size_t extent);

/// Whether a causal factor has per-segment blocks or one block shared by all.
enum class Compositionality { full, shared };

struct HierarchyNode {
    std::string id;
    std::optional<std::size_t> parent;
    SegmentFilter filter;
    std::vector<std::size_t> children;
};

/// Input form of a node: the parent is named by id, empty for the root.
struct NodeConfig {
    std::string id;
    std::string parent;
    SegmentFilter filter;
};

/// An original node that was replaced by the union of disjoint atoms.
struct DerivedWhole {
    std::string id;
    std::vector<std::size_t> atoms;
};

/**
 * Tree of measurement-mode segments with per-factor compositionality flags.
 *
 * Nodes are stored depth-first from the root, children in ascending order of
 * their first support index. Compositionality is indexed by causal factor
 * c = 1..C; factors beyond the configured list default to fully
 * compositional.
 */
class HierarchySpec {
public:
    HierarchySpec() = default;
    HierarchySpec(std::size_t extent, const std::vector<NodeConfig>& nodes,
                  std::vector<Compositionality> compositional = {});

    [[nodiscard]] std::size_t extent() const noexcept { return extent_; }
    [[nodiscard]] const std::vector<HierarchyNode>& nodes() const noexcept { return nodes_; }
    [[nodiscard]] std::size_t node_count() const noexcept { return nodes_.size(); }
    [[nodiscard]] const HierarchyNode& node(std::size_t index) const { return nodes_.at(index); }
    [[nodiscard]] std::optional<std::size_t> find(const std::string& id) const;
    [[nodiscard]] std::size_t root() const noexcept { return 0; }
    [[nodiscard]] std::vector<std::size_t> leaves() const;
    [[nodiscard]] std::size_t depth(std::size_t index) const;

    [[nodiscard]] Compositionality compositional(std::size_t factor) const;
    [[nodiscard]] const std::vector<Compositionality>& compositional_flags() const noexcept { return compositional_; }
    void set_compositional(std::vector<Compositionality> flags) { compositional_ = std::move(flags); }

    [[nodiscard]] const std::vector<DerivedWhole>& derived_wholes() const noexcept { return derived_; }

    /// Filters of the leaves, in node order.
    [[nodiscard]] std::vector<SegmentFilter> leaf_filters() const;
    /// Leaves sum to identity on the whole mode.
    [[nodiscard]] BankReport leaf_bank() const;
    /// Largest deviation between any internal node's filter and the sum of its children.
    [[nodiscard]] double children_bank_deviation() const;
    /// Whether leaf supports are pairwise disjoint.
    [[nodiscard]] bool leaves_disjoint() const;

    /// Round trip back to node configs (used by expand_overlaps and JSON output).
    [[nodiscard]] std::vector<NodeConfig> to_configs() const;

private:
    friend HierarchySpec expand_overlaps(const HierarchySpec& spec);

    std::size_t extent_ = 0;
    std::vector<HierarchyNode> nodes_;
    std::vector<Compositionality> compositional_;
    std::vector<DerivedWhole> derived_;
};

/// All segment tensors of a hierarchy; the leaves form the bank whose sum is D.
struct HierarchicalView {
    std::vector<DenseTensor> segments;
    std::vector<std::size_t> bank;
    [[nodiscard]] DenseTensor bank_sum() const;
};

/// Segments every node of the hierarchy; throws ConfigError when the leaves
/// do not form a filter bank.
HierarchicalView assemble_hierarchical(const DenseTensor& data, const HierarchySpec& spec);

/**
 * Replaces every group of overlapping siblings with the disjoint atoms of
 * their intersection lattice (one atom per distinct membership pattern),
 * ordered by first support index. The replaced siblings are recorded as
 * derived wholes so they can be rebuilt from their atoms. Descendants of a
 * replaced sibling are dropped. Disjoint specs come back unchanged.
 */
HierarchySpec expand_overlaps(const HierarchySpec& spec);

/**
 * Laplacian-pyramid band filters over a signal of length `length`.
 *
 * Band l (l < levels-1) is G_l - G_{l+1} and the last band is G_{levels-1},
 * where G_l reduces l times (binomial [1 2 1]/4 circulant smoothing, then
 * decimation by 2) and expands back. The bands telescope to the identity.
 */
std::vector<SegmentFilter> pyramid_filters(std::size_t levels, std::size_t length);

/// Pyramid bands restricted to an arbitrary support.
std::vector<SegmentFilter> pyramid_filters(std::size_t levels, const std::vector<std::size_t>& support);

/// Root plus `parts` equal contiguous disjoint leaves.
HierarchySpec split_parts(std::size_t extent, std::size_t parts, std::vector<Compositionality> compositional = {});

/// Full recursive subdivision of [0, extent) into `arity` contiguous children per level.
HierarchySpec uniform_subdivision(std::size_t extent, std::size_t levels, std::size_t arity = 2,
                                  std::vector<Compositionality> compositional = {});

/**
 * Hierarchy config (JSON):
 *   { "nodes": [ {"id": "root", "parent": null, "support": [start, len]
 *                 | "indices": [...], "filter": "identity" | "pyramid:L"}, ...],
 *     "compositional": {"1": "full", "2": "shared", ...} }
 * A missing support inherits the parent's. "pyramid:L" is band L of a
 * pyramid whose depth is the number of pyramid-filtered siblings.
 */
HierarchySpec hierarchy_from_json(const std::string& text, std::size_t extent);
std::string hierarchy_to_json(const HierarchySpec& spec);

} // namespace mmb
