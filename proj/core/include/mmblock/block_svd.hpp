#pragma once

#include "mmblock/factor_model.hpp"
#include "mmblock/hierarchy.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mmb {

/// One block of the block super-diagonal core with its mode matrices.
struct BlockSegment {
    /// Hierarchy node the block belongs to (leaf index for batch models).
    std::size_t node = 0;
    /// Mode-0 support; rows of modes[0] outside it are zero.
    std::vector<std::size_t> support;
    DenseTensor core;
    /// U_{0,s} (I_0 x J_0s), then U_{c,s} (I_c x J_cs). Shared factors hold
    /// identical copies in every segment.
    std::vector<Matrix> modes;
    std::vector<Vector> sigmas;

    [[nodiscard]] std::vector<std::size_t> ranks() const;
};

enum class Orthonormalization { hard, penalty };

struct BlockSolveReport {
    /// Entry 0 is the loss of the initialization, then one per sweep. In
    /// penalty mode the entries include the penalty term.
    std::vector<double> loss_trace;
    std::size_t sweeps = 0;
    bool converged = false;
    /// Largest loss increase seen between sweeps, relative to ||D||^2.
    double max_relative_increase = 0.0;
    /// Sweeps in which some least-squares Gram matrix was rank deficient.
    std::vector<std::size_t> singular_sweeps;
    /// Final ||U^T U - I|| per (mode, segment).
    std::vector<std::vector<double>> orthonormality;
    /// sum lambda_{m,s} ||U_{m,s}^T U_{m,s} - I||_F^2 of the final model.
    double penalty_term = 0.0;
};

/**
 * Block multilinear model D ~ sum_s Z_s x_0 U_{0,s} x_1 U_{1,s} ... x_C U_{C,s}.
 *
 * Equivalently D ~ Z_H x_0 U_0x x_1 U_1x ... with Z_H block super-diagonal and
 * U_mx the concatenation [U_{m,1} | ... | U_{m,S}], or the single shared U_m
 * for a shared factor.
 */
struct BlockFactorModel {
    HierarchySpec hierarchy;
    std::vector<BlockSegment> segments;
    /// Per causal factor c = 1..C (index c-1); missing entries are full.
    std::vector<Compositionality> compositional;
    /// lambdas(m, s); only read in penalty mode.
    Matrix lambdas;
    Shape data_shape;
    BlockSolveReport report;

    [[nodiscard]] std::size_t order() const noexcept { return data_shape.size(); }
    [[nodiscard]] std::size_t segment_count() const noexcept { return segments.size(); }
    [[nodiscard]] bool shared(std::size_t mode) const;

    /// U_mx, or the shared U_m.
    [[nodiscard]] Matrix mode_matrix(std::size_t mode) const;
    /// Z_H with Z_s on the super-diagonal; shared modes are not concatenated.
    [[nodiscard]] DenseTensor materialize_core() const;
    [[nodiscard]] DenseTensor reconstruct_segment(std::size_t s) const;
    /// Z_H x_m U_mx over all modes.
    [[nodiscard]] DenseTensor reconstruct_via_selectors() const;
    /// Flat model of one segment; with restrict_rows the measurement mode
    /// keeps only the support rows.
    [[nodiscard]] FactorModel segment_model(std::size_t s, bool restrict_rows = false) const;
};

DenseTensor reconstruct(const BlockFactorModel& model);
double squared_loss(const DenseTensor& data, const BlockFactorModel& model);
/// sum lambda ||U^T U - I||_F^2 over every block.
double orthonormality_penalty(const BlockFactorModel& model);

struct BlockSolverConfig {
    /// Stop once a sweep lowers the loss by at most eps * ||D||^2.
    double eps = 1e-10;
    std::size_t max_iters = 100;
    Orthonormalization orthonormalization = Orthonormalization::hard;
    /// Penalty weight for every block (experimental).
    double lambda = 1.0;
    RankSpec ranks = RankSpec::full();
    /// Per-segment overrides, indexed like the segments.
    std::vector<RankSpec> segment_ranks;
    /// Factorize the initial segments on separate threads.
    bool parallel = false;

    void validate() const;
};

/**
 * ALS over the block model, segments = hierarchy leaves. Initialized from an
 * M-mode SVD of every segment; shared factors start from the leading left
 * singular vectors of [U_{c,1} Sigma_{c,1} | ... ]. Each sweep solves every
 * mode matrix in the least-squares sense, orthonormalizes the blocks, and
 * refits the cores.
 */
BlockFactorModel block_mmode_svd(const DenseTensor& data, const HierarchySpec& spec,
                                 const BlockSolverConfig& config = {});

/// Initialization used by block_mmode_svd (max_iters = 0 returns this).
BlockFactorModel block_initialize(const DenseTensor& data, const HierarchySpec& spec,
                                  const BlockSolverConfig& config = {});

/**
 * Least-squares update of mode `mode` with every other mode matrix and the
 * cores fixed, followed by orthonormalization of each block (R absorbed into
 * the cores). Updates the model in place and returns the new U_mx.
 * Throws NumericalError when every core is zero.
 */
Matrix update_mode_matrix(std::size_t mode, const DenseTensor& data, BlockFactorModel& model,
                          const BlockSolverConfig& config = {});

/**
 * Least-squares cores for fixed mode matrices. Only the super-diagonal blocks
 * are unknowns. Segments whose mode products are mutually orthogonal are
 * solved independently.
 */
std::vector<DenseTensor> solve_core(const DenseTensor& data, const BlockFactorModel& model);

/// Per-leaf M-mode SVD refined by HOOI; leaves must be disjoint and every
/// factor fully compositional.
BlockFactorModel factorize_independent_parts(const DenseTensor& data, const HierarchySpec& spec,
                                             const RankSpec& ranks = RankSpec::full(),
                                             const BlockSolverConfig& config = {});

/**
 * Sum of `terms` full-support Tucker blocks with identical ranks, fitted by
 * the same ALS. Initialized by greedy deflation.
 */
BlockFactorModel factorize_overlapping_shared_rank(const DenseTensor& data, std::size_t terms,
                                                   const std::vector<std::size_t>& ranks,
                                                   const BlockSolverConfig& config = {});

std::string solver_report_json(const BlockFactorModel& model);

} // namespace mmb
