#include "mmblock/factor_model.hpp"

#include "mmblock/error.hpp"
#include "mmblock/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mmb {

RankSpec RankSpec::full() {
    RankSpec spec;
    spec.full_ = true;
    return spec;
}

RankSpec RankSpec::fixed(std::vector<std::size_t> ranks) {
    RankSpec spec;
    if (std::any_of(ranks.begin(), ranks.end(), [](std::size_t r) { return r == 0; })) {
        throw DimensionError("ranks must be at least 1");
    }
    spec.ranks_ = std::move(ranks);
    return spec;
}

RankSpec RankSpec::energy(double tau) {
    if (!(tau > 0.0 && tau <= 1.0)) throw DimensionError("energy threshold must lie in (0, 1]");
    RankSpec spec;
    spec.tau_ = tau;
    return spec;
}

std::optional<double> RankSpec::tau() const noexcept {
    if (full_ || !ranks_.empty()) return std::nullopt;
    return tau_;
}

std::size_t RankSpec::resolve(std::size_t mode, std::size_t extent, const Vector& singular_values) const {
    if (full_) return extent;
    if (!ranks_.empty()) {
        if (mode >= ranks_.size()) throw DimensionError("rank spec has no entry for mode " + std::to_string(mode));
        if (ranks_[mode] > extent) {
            throw DimensionError("rank " + std::to_string(ranks_[mode]) + " exceeds extent " +
                                 std::to_string(extent) + " of mode " + std::to_string(mode));
        }
        return ranks_[mode];
    }
    const double total = singular_values.squaredNorm();
    if (total == 0.0) return 1;
    double acc = 0.0;
    for (Eigen::Index j = 0; j < singular_values.size(); ++j) {
        acc += singular_values(j) * singular_values(j);
        // Relative slack absorbs rounding when tau = 1.
        if (acc >= tau_ * total * (1.0 - 1e-14)) return static_cast<std::size_t>(j + 1);
    }
    return static_cast<std::size_t>(singular_values.size());
}

Shape FactorModel::data_shape() const {
    Shape shape;
    shape.reserve(modes.size());
    for (const auto& u : modes) shape.push_back(static_cast<std::size_t>(u.rows()));
    return shape;
}

std::vector<std::size_t> FactorModel::ranks() const {
    std::vector<std::size_t> out;
    out.reserve(modes.size());
    for (const auto& u : modes) out.push_back(static_cast<std::size_t>(u.cols()));
    return out;
}

DenseTensor FactorModel::extended_core() const {
    if (modes.empty()) throw DimensionError("model has no modes");
    return mode_product(core, 0, modes[0]);
}

namespace {

DenseTensor subtract_mean(const DenseTensor& data, const Vector& mean) {
    if (mean.size() == 0) return data;
    if (static_cast<std::size_t>(mean.size()) != data.extent(0)) {
        throw DimensionError("mean length does not match mode-0 extent");
    }
    DenseTensor out = data;
    const std::size_t fibers = data.size() / data.extent(0);
    const auto rows = static_cast<Eigen::Index>(data.extent(0));
    for (std::size_t f = 0; f < fibers; ++f) {
        Eigen::Map<Vector>(out.data().data() + f * data.extent(0), rows) -= mean;
    }
    return out;
}

Vector mode0_mean(const DenseTensor& data) {
    const auto rows = static_cast<Eigen::Index>(data.extent(0));
    const auto cols = static_cast<Eigen::Index>(data.size() / data.extent(0));
    return Eigen::Map<const Matrix>(data.data().data(), rows, cols).rowwise().mean();
}

Vector padded(const Vector& s, std::size_t count) {
    Vector out = Vector::Zero(static_cast<Eigen::Index>(count));
    const auto n = std::min<Eigen::Index>(s.size(), out.size());
    out.head(n) = s.head(n);
    return out;
}

} // namespace

FactorModel mmode_svd(const DenseTensor& data, const RankSpec& ranks, const MmodeSvdOptions& options) {
    if (data.empty()) throw DimensionError("mmode_svd: empty tensor");
    if (!data.all_finite()) throw NumericalError("mmode_svd: non-finite data");
    FactorModel model;
    if (options.center) model.mean = mode0_mean(data);
    const DenseTensor centered = subtract_mean(data, model.mean);

    const std::size_t order = data.order();
    model.modes.resize(order);
    model.sigmas.resize(order);
    for (std::size_t m = 0; m < order; ++m) {
        const auto svd = thin_svd(matrixize(centered, m));
        const std::size_t rank = ranks.resolve(m, data.extent(m), svd.s);
        const auto available = std::min<Eigen::Index>(svd.u.cols(), static_cast<Eigen::Index>(rank));
        model.modes[m] = complete_basis(svd.u.leftCols(available), rank);
        model.sigmas[m] = padded(svd.s, rank);
    }
    model.core = multi_mode_product(centered, model.modes, /*transpose=*/true);
    return model;
}

DenseTensor reconstruct(const FactorModel& model) {
    DenseTensor out = multi_mode_product(model.core, model.modes, /*transpose=*/false);
    if (model.mean.size() > 0) {
        const std::size_t rows = out.extent(0);
        const std::size_t fibers = out.size() / rows;
        for (std::size_t f = 0; f < fibers; ++f) {
            Eigen::Map<Vector>(out.data().data() + f * rows, static_cast<Eigen::Index>(rows)) += model.mean;
        }
    }
    return out;
}

double squared_loss(const DenseTensor& data, const FactorModel& model) {
    return (data - reconstruct(model)).squared_norm();
}

HooiResult hooi_refine(const DenseTensor& data, const FactorModel& model, double eps, std::size_t max_iters) {
    if (model.data_shape() != data.shape()) throw DimensionError("hooi_refine: model shape does not match data");
    HooiResult result;
    result.model = model;
    result.loss_trace.push_back(squared_loss(data, model));
    if (max_iters == 0) return result;

    const DenseTensor centered = subtract_mean(data, model.mean);
    const double threshold = eps * centered.squared_norm();
    const std::size_t order = data.order();
    FactorModel& current = result.model;

    for (std::size_t sweep = 0; sweep < max_iters; ++sweep) {
        for (std::size_t m = 0; m < order; ++m) {
            const DenseTensor projected = multi_mode_product(centered, current.modes, true, m);
            const auto svd = thin_svd(matrixize(projected, m));
            const auto rank = static_cast<std::size_t>(current.modes[m].cols());
            const auto available = std::min<Eigen::Index>(svd.u.cols(), static_cast<Eigen::Index>(rank));
            current.modes[m] = complete_basis(svd.u.leftCols(available), rank);
            current.sigmas[m] = padded(svd.s, rank);
        }
        current.core = multi_mode_product(centered, current.modes, true);
        const double loss = squared_loss(data, current);
        const double previous = result.loss_trace.back();
        result.loss_trace.push_back(loss);
        result.sweeps = sweep + 1;
        if (previous - loss <= threshold) {
            result.converged = true;
            break;
        }
    }
    return result;
}

DenseTensor outer_product(const std::vector<Vector>& factors) {
    if (factors.empty()) throw DimensionError("outer_product: no factors");
    Shape shape;
    for (const auto& f : factors) shape.push_back(static_cast<std::size_t>(f.size()));
    DenseTensor out(shape);
    std::vector<std::size_t> index(shape.size(), 0);
    for (std::size_t linear = 0; linear < out.size(); ++linear) {
        double v = 1.0;
        for (std::size_t m = 0; m < shape.size(); ++m) v *= factors[m](static_cast<Eigen::Index>(index[m]));
        out.data()[linear] = v;
        for (std::size_t m = 0; m < shape.size(); ++m) {
            if (++index[m] < shape[m]) break;
            index[m] = 0;
        }
    }
    return out;
}

namespace {

// T contracted with every factor except `skip`, as a vector over mode `skip`.
Vector contract_except(const DenseTensor& tensor, const std::vector<Vector>& factors, std::size_t skip) {
    DenseTensor work = tensor;
    for (std::size_t m = 0; m < factors.size(); ++m) {
        if (m == skip) continue;
        work = mode_product(work, m, factors[m].transpose());
    }
    return vec(work);
}

double rank1_residual(const DenseTensor& tensor, const std::vector<Vector>& unit, double weight) {
    DenseTensor approx = outer_product(unit);
    approx *= weight;
    return (tensor - approx).frobenius_norm();
}

} // namespace

Rank1Fit rank1_cp(const DenseTensor& tensor, std::size_t max_iters, double eps) {
    const double norm = tensor.frobenius_norm();
    if (tensor.empty() || norm == 0.0) throw NumericalError("rank1_cp: zero tensor has no direction");
    Rank1Fit fit;
    const std::size_t order = tensor.order();
    if (order == 1) {
        fit.factors = {vec(tensor)};
        fit.weight = norm;
        fit.residual = 0.0;
        fit.residual_trace = {0.0};
        return fit;
    }

    std::vector<Vector> unit(order);
    for (std::size_t m = 0; m < order; ++m) {
        const auto svd = thin_svd(matrixize(tensor, m));
        unit[m] = svd.u.col(0);
        if (svd.s.size() > 1 && svd.s(0) - svd.s(1) <= 1e-6 * svd.s(0)) fit.degenerate = true;
    }
    double weight = vec(outer_product(unit)).dot(vec(tensor));
    fit.residual_trace.push_back(rank1_residual(tensor, unit, weight));

    for (std::size_t it = 0; it < max_iters; ++it) {
        for (std::size_t m = 0; m < order; ++m) {
            Vector next = contract_except(tensor, unit, m);
            const double n = next.norm();
            if (n == 0.0) throw NumericalError("rank1_cp: iteration collapsed to zero");
            unit[m] = next / n;
            weight = n;
        }
        const double residual = rank1_residual(tensor, unit, weight);
        const double previous = fit.residual_trace.back();
        fit.residual_trace.push_back(residual);
        fit.iterations = it + 1;
        if (previous - residual <= eps * norm) break;
    }

    // Fix signs: modes >= 1 follow the SVD convention, mode 0 absorbs the sign.
    for (std::size_t m = 1; m < order; ++m) {
        Matrix col = unit[m];
        Matrix partner = unit[0];
        normalize_signs(col, &partner);
        unit[m] = col.col(0);
        unit[0] = partner.col(0);
    }
    fit.weight = weight;
    fit.residual = fit.residual_trace.back();
    fit.factors = unit;
    fit.factors[0] *= weight;
    return fit;
}

} // namespace mmb
