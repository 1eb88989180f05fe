#pragma once

#include "mmblock/block_svd.hpp"
#include "mmblock/factor_model.hpp"

#include <optional>
#include <vector>

namespace mmb {

/// Estimated causal-factor representations of one observation.
struct FactorRepresentation {
    /// r_c for c = 1..C, unit norm; index 0 is unused.
    std::vector<Vector> factors;
    /// Magnitude of the rank-1 fit.
    double scale = 0.0;
    /// ||R - scale r_1 o ... o r_C||_F of the projected tensor R.
    double residual = 0.0;
    /// Rank-1 direction not unique (tied leading singular values).
    bool degenerate = false;
};

/**
 * R = pinv(T_[0]) (d - mean), reshaped to J_1 x ... x J_C, followed by a
 * rank-1 fit. Throws DimensionError on a length mismatch and NumericalError
 * when R is zero ("no direction").
 */
FactorRepresentation multilinear_project(const FactorModel& model, const Vector& observation);

struct LabelGuess {
    std::size_t index = 0;
    /// |cos| between r_c and the chosen row of U_c.
    double score = 0.0;
    bool low_confidence = false;
};

inline constexpr double kLowConfidenceScore = 0.5;

/// Per factor c = 1..C (index c-1): row of U_c with the largest |cos| to r_c,
/// lowest index on ties.
std::vector<LabelGuess> infer_labels(const FactorRepresentation& rep, const FactorModel& model);
std::vector<LabelGuess> infer_labels(const FactorRepresentation& rep, const std::vector<Matrix>& modes);

struct SegmentProjection {
    std::size_t segment = 0;
    FactorRepresentation representation;
    std::vector<LabelGuess> labels;
};

struct BlockProjection {
    /// Fully visible segments only.
    std::vector<SegmentProjection> segments;
    /// Score-weighted vote over the segments, per factor c = 1..C.
    std::vector<LabelGuess> labels;
};

/**
 * Projects the observation onto every segment whose mode-0 support is fully
 * visible and votes across them. `visible` has one entry per mode-0 index.
 * Throws NumericalError when no segment is fully visible.
 */
BlockProjection project_block(const BlockFactorModel& model, const Vector& observation,
                              const std::vector<bool>& visible);

} // namespace mmb
