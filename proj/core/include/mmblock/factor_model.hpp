#pragma once

#include "mmblock/tensor.hpp"

#include <optional>
#include <vector>

namespace mmb {

/**
 * Per-mode truncation rule: either explicit ranks J_m (one per mode), full
 * ranks (J_m = I_m), or the smallest ranks whose retained singular-value
 * energy reaches a threshold tau in (0, 1].
 */
class RankSpec {
public:
    /// Energy threshold 0.99.
    RankSpec() = default;

    static RankSpec full();
    static RankSpec fixed(std::vector<std::size_t> ranks);
    static RankSpec energy(double tau);

    [[nodiscard]] bool is_full() const noexcept { return full_; }
    [[nodiscard]] const std::vector<std::size_t>& ranks() const noexcept { return ranks_; }
    [[nodiscard]] std::optional<double> tau() const noexcept;

    /// Resolves the rank for one mode from its singular values.
    [[nodiscard]] std::size_t resolve(std::size_t mode, std::size_t extent, const Vector& singular_values) const;

private:
    bool full_ = false;
    std::vector<std::size_t> ranks_;
    double tau_ = 0.99;
};

/**
 * Flat multilinear model D ~ Z x_0 U_0 x_1 U_1 ... x_C U_C (+ mean along
 * mode 0). The extended core T = Z x_0 U_0 is materialized on demand; both
 * views describe the same model.
 */
struct FactorModel {
    DenseTensor core;
    std::vector<Matrix> modes;
    std::vector<Vector> sigmas;
    /// Mode-0 mean observation; empty when the data was not centered.
    Vector mean;

    [[nodiscard]] std::size_t order() const noexcept { return modes.size(); }
    [[nodiscard]] Shape data_shape() const;
    [[nodiscard]] std::vector<std::size_t> ranks() const;
    [[nodiscard]] DenseTensor extended_core() const;
};

struct MmodeSvdOptions {
    /// Subtract the mean mode-0 fiber before factorizing.
    bool center = false;
};

/// M-mode SVD (HOSVD): U_m from the left singular vectors of D_[m], Z = D x_m U_m^T.
FactorModel mmode_svd(const DenseTensor& data, const RankSpec& ranks, const MmodeSvdOptions& options = {});

DenseTensor reconstruct(const FactorModel& model);

/// ||D - reconstruct(model)||^2.
double squared_loss(const DenseTensor& data, const FactorModel& model);

struct HooiResult {
    FactorModel model;
    /// Entry 0 is the loss of the input model, then one entry per sweep.
    std::vector<double> loss_trace;
    std::size_t sweeps = 0;
    bool converged = false;
};

/**
 * Alternating least-squares refinement (HOOI). Each sweep updates every mode
 * from the leading singular vectors of D x_{n != m} U_n^T and then refits the
 * core. Stops when the loss decrease is <= eps * ||D||^2 or after max_iters
 * sweeps.
 */
HooiResult hooi_refine(const DenseTensor& data, const FactorModel& model, double eps = 1e-9,
                       std::size_t max_iters = 100);

struct Rank1Fit {
    /// factors[0] carries the magnitude; the others have unit norm.
    std::vector<Vector> factors;
    double weight = 0.0;
    double residual = 0.0;
    std::vector<double> residual_trace;
    std::size_t iterations = 0;
    /// Set when the leading singular values of some unfolding tie, i.e. the
    /// best rank-1 direction is not unique.
    bool degenerate = false;
};

/// Best rank-1 approximation by alternating power iteration, initialized from
/// the leading singular vectors of every unfolding.
Rank1Fit rank1_cp(const DenseTensor& tensor, std::size_t max_iters = 500, double eps = 1e-15);

/// Outer product of one vector per mode.
DenseTensor outer_product(const std::vector<Vector>& factors);

} // namespace mmb
