#include "mmblock/block_svd.hpp"

#include "mmblock/error.hpp"
#include "mmblock/linalg.hpp"

#include "detail.hpp"

#include <json.hpp>

#include <algorithm>
#include <exception>
#include <map>
#include <numeric>
#include <thread>

namespace mmb {

namespace {

using Index = Eigen::Index;
using detail::embed_rows;
using detail::gather_rows;
using detail::idx;
using detail::padded;
using detail::restrict_rows;

/// X G^+ for symmetric positive semidefinite G; flags dropped directions.
Matrix solve_right(const Matrix& rhs, const Matrix& gram, bool& deficient) {
    const auto svd = thin_svd(gram);
    Matrix inv = Matrix::Zero(gram.cols(), gram.rows());
    if (svd.s.size() == 0 || svd.s(0) == 0.0) {
        deficient = true;
        return rhs * inv;
    }
    const double cutoff = default_rcond(gram) * svd.s(0);
    for (Index j = 0; j < svd.s.size(); ++j) {
        if (svd.s(j) <= cutoff) {
            deficient = true;
            break;
        }
        inv.noalias() += svd.v.col(j) * (svd.u.col(j).transpose() / svd.s(j));
    }
    return rhs * inv;
}

template <class Fn>
void for_each_segment(std::size_t count, bool parallel, Fn&& fn) {
    if (!parallel || count < 2) {
        for (std::size_t s = 0; s < count; ++s) fn(s);
        return;
    }
    std::vector<std::exception_ptr> errors(count);
    std::vector<std::thread> workers;
    workers.reserve(count);
    for (std::size_t s = 0; s < count; ++s) {
        workers.emplace_back([&, s] {
            try {
                fn(s);
            } catch (...) {
                errors[s] = std::current_exception();
            }
        });
    }
    for (auto& w : workers) w.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

/// Least-squares system of one mode: loss - ||D||^2 = -2<U, B> + tr(U G U^T)
/// in segment-concatenated coordinates.
struct ModeSystem {
    Matrix gram;
    Matrix rhs;
    std::vector<Index> offsets;  // size S + 1
};

ModeSystem mode_system(std::size_t mode, const DenseTensor& data, const BlockFactorModel& model) {
    const std::size_t segs = model.segment_count();
    const std::size_t order = model.order();
    ModeSystem sys;
    sys.offsets.assign(segs + 1, 0);
    for (std::size_t s = 0; s < segs; ++s) sys.offsets[s + 1] = sys.offsets[s] + model.segments[s].modes[mode].cols();
    const Index total = sys.offsets.back();
    sys.gram = Matrix::Zero(total, total);
    sys.rhs = Matrix::Zero(idx(data.extent(mode)), total);

    std::vector<Matrix> unfolded(segs);
    for (std::size_t s = 0; s < segs; ++s) {
        const auto& seg = model.segments[s];
        unfolded[s] = matrixize(seg.core, mode);
        const DenseTensor y = multi_mode_product(data, seg.modes, /*transpose=*/true, mode);
        sys.rhs.middleCols(sys.offsets[s], unfolded[s].rows()) = matrixize(y, mode) * unfolded[s].transpose();
    }
    for (std::size_t s = 0; s < segs; ++s) {
        for (std::size_t t = s; t < segs; ++t) {
            std::vector<Matrix> cross(order);
            bool zero = false;
            for (std::size_t k = 0; k < order && !zero; ++k) {
                if (k == mode) continue;
                cross[k] = model.segments[s].modes[k].transpose() * model.segments[t].modes[k];
                zero = cross[k].cwiseAbs().maxCoeff() == 0.0;
            }
            if (zero) continue;
            const DenseTensor x = multi_mode_product(model.segments[t].core, cross, /*transpose=*/false, mode);
            const Matrix block = unfolded[s] * matrixize(x, mode).transpose();
            sys.gram.block(sys.offsets[s], sys.offsets[t], block.rows(), block.cols()) = block;
            if (t != s) sys.gram.block(sys.offsets[t], sys.offsets[s], block.cols(), block.rows()) = block.transpose();
        }
    }
    return sys;
}

/// Collapses segment coordinates for a shared factor: U_s = U for every s.
ModeSystem collapse_shared(const ModeSystem& sys) {
    const Index width = sys.offsets[1];
    const std::size_t segs = sys.offsets.size() - 1;
    ModeSystem out;
    out.offsets = {0, width};
    out.gram = Matrix::Zero(width, width);
    out.rhs = Matrix::Zero(sys.rhs.rows(), width);
    for (std::size_t s = 0; s < segs; ++s) {
        if (sys.offsets[s + 1] - sys.offsets[s] != width) throw DimensionError("shared factor with unequal block ranks");
        out.rhs += sys.rhs.middleCols(sys.offsets[s], width);
        for (std::size_t t = 0; t < segs; ++t) out.gram += sys.gram.block(sys.offsets[s], sys.offsets[t], width, width);
    }
    return out;
}

/// Unconstrained least-squares minimizer. Mode 0 is solved row by row,
/// grouped by which segment supports contain the row.
Matrix least_squares(std::size_t mode, const ModeSystem& sys, const BlockFactorModel& model, bool shared,
                     bool& deficient) {
    if (mode != 0 || shared) return solve_right(sys.rhs, sys.gram, deficient);
    const std::size_t segs = model.segment_count();
    std::map<std::vector<std::size_t>, std::vector<Index>> groups;
    for (Index row = 0; row < sys.rhs.rows(); ++row) {
        std::vector<std::size_t> active;
        for (std::size_t s = 0; s < segs; ++s) {
            const auto& sup = model.segments[s].support;
            if (std::binary_search(sup.begin(), sup.end(), static_cast<std::size_t>(row))) active.push_back(s);
        }
        if (!active.empty()) groups[active].push_back(row);
    }
    Matrix out = Matrix::Zero(sys.rhs.rows(), sys.rhs.cols());
    for (const auto& [active, rows] : groups) {
        std::vector<Index> cols;
        for (std::size_t s : active)
            for (Index c = sys.offsets[s]; c < sys.offsets[s + 1]; ++c) cols.push_back(c);
        const Matrix gram = sys.gram(cols, cols);
        const Matrix rhs = sys.rhs(rows, cols);
        out(rows, cols) = solve_right(rhs, gram, deficient);
    }
    return out;
}

double penalty_of(const Matrix& u, double lambda) {
    if (lambda == 0.0 || u.cols() == 0) return 0.0;
    return lambda * (u.transpose() * u - Matrix::Identity(u.cols(), u.cols())).squaredNorm();
}

/// Mask of admissible entries: mode-0 blocks live on their supports.
Matrix entry_mask(std::size_t mode, const ModeSystem& sys, const BlockFactorModel& model, bool shared) {
    Matrix mask = Matrix::Ones(sys.rhs.rows(), sys.rhs.cols());
    if (mode != 0 || shared) return mask;
    for (std::size_t s = 0; s < model.segment_count(); ++s) {
        const Index width = sys.offsets[s + 1] - sys.offsets[s];
        mask.middleCols(sys.offsets[s], width).setZero();
        for (std::size_t r : model.segments[s].support) mask.block(idx(r), sys.offsets[s], 1, width).setOnes();
    }
    return mask;
}

struct PenaltyObjective {
    const ModeSystem& sys;
    std::vector<double> lambdas;  // per block in sys coordinates

    double value(const Matrix& u) const {
        double v = -2.0 * (u.array() * sys.rhs.array()).sum() + (u * sys.gram * u.transpose()).trace();
        for (std::size_t b = 0; b + 1 < sys.offsets.size(); ++b) {
            v += penalty_of(u.middleCols(sys.offsets[b], sys.offsets[b + 1] - sys.offsets[b]), lambdas[b]);
        }
        return v;
    }

    Matrix gradient(const Matrix& u) const {
        Matrix g = 2.0 * (u * sys.gram - sys.rhs);
        for (std::size_t b = 0; b + 1 < sys.offsets.size(); ++b) {
            const Index w = sys.offsets[b + 1] - sys.offsets[b];
            const auto block = u.middleCols(sys.offsets[b], w);
            g.middleCols(sys.offsets[b], w) +=
                4.0 * lambdas[b] * block * (block.transpose() * block - Matrix::Identity(w, w));
        }
        return g;
    }
};

/// Minimizes data loss plus the orthonormality penalty with the cores fixed:
/// keeps the better of the current point and the least-squares candidate,
/// then takes backtracking gradient steps. Never increases the objective.
Matrix penalty_step(const Matrix& current, const Matrix& candidate, const Matrix& mask, const PenaltyObjective& f) {
    Matrix u = f.value(candidate) <= f.value(current) ? candidate : current;
    double value = f.value(u);
    const double lipschitz = 2.0 * f.sys.gram.norm() + 1.0;
    double step = 1.0 / lipschitz;
    for (int iter = 0; iter < 50; ++iter) {
        const Matrix g = (f.gradient(u).array() * mask.array()).matrix();
        const double g2 = g.squaredNorm();
        if (g2 <= 1e-30) break;
        bool moved = false;
        for (int halve = 0; halve < 40; ++halve) {
            const Matrix trial = u - step * g;
            const double tv = f.value(trial);
            if (tv <= value - 1e-4 * step * g2) {
                u = trial;
                value = tv;
                moved = true;
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        if (!moved) break;
    }
    return u;
}

void set_mode_blocks(std::size_t mode, const Matrix& u, const ModeSystem& sys, BlockFactorModel& model, bool shared) {
    for (std::size_t s = 0; s < model.segment_count(); ++s) {
        auto& target = model.segments[s].modes[mode];
        target = shared ? u : Matrix(u.middleCols(sys.offsets[s], sys.offsets[s + 1] - sys.offsets[s]));
    }
}

/// QR of each block, R absorbed into the cores. Mode-0 blocks are factorized
/// on their support rows so the zero pattern survives.
void orthonormalize_mode(std::size_t mode, BlockFactorModel& model, bool shared) {
    if (shared) {
        const auto qr = thin_qr(model.segments[0].modes[mode]);
        for (auto& seg : model.segments) {
            seg.modes[mode] = qr.q;
            seg.core = mode_product(seg.core, mode, qr.r);
        }
        return;
    }
    const std::size_t extent = model.data_shape[mode];
    for (auto& seg : model.segments) {
        if (mode == 0) {
            const auto qr = thin_qr(restrict_rows(seg.modes[0], seg.support));
            seg.modes[0] = embed_rows(qr.q, seg.support, extent);
            seg.core = mode_product(seg.core, 0, qr.r);
        } else {
            const auto qr = thin_qr(seg.modes[mode]);
            seg.modes[mode] = qr.q;
            seg.core = mode_product(seg.core, mode, qr.r);
        }
    }
}

enum class StepStatus { ok, deficient, degenerate };

StepStatus update_mode_impl(std::size_t mode, const DenseTensor& data, BlockFactorModel& model,
                            const BlockSolverConfig& config) {
    const bool shared = model.shared(mode);
    ModeSystem sys = mode_system(mode, data, model);
    if (shared) sys = collapse_shared(sys);
    if (sys.gram.size() == 0 || sys.gram.cwiseAbs().maxCoeff() == 0.0) return StepStatus::degenerate;
    bool deficient = false;
    const Matrix candidate = least_squares(mode, sys, model, shared, deficient);
    if (config.orthonormalization == Orthonormalization::hard) {
        set_mode_blocks(mode, candidate, sys, model, shared);
        orthonormalize_mode(mode, model, shared);
    } else {
        PenaltyObjective f{sys, {}};
        if (shared) {
            double lambda = 0.0;
            for (std::size_t s = 0; s < model.segment_count(); ++s) lambda += model.lambdas(idx(mode), idx(s));
            f.lambdas = {lambda};
        } else {
            for (std::size_t s = 0; s < model.segment_count(); ++s) f.lambdas.push_back(model.lambdas(idx(mode), idx(s)));
        }
        const Matrix current = shared ? model.segments[0].modes[mode] : model.mode_matrix(mode);
        const Matrix next = penalty_step(current, candidate, entry_mask(mode, sys, model, shared), f);
        set_mode_blocks(mode, next, sys, model, shared);
    }
    return deficient ? StepStatus::deficient : StepStatus::ok;
}

double objective(const DenseTensor& data, const BlockFactorModel& model, const BlockSolverConfig& config) {
    double v = squared_loss(data, model);
    if (config.orthonormalization == Orthonormalization::penalty) v += orthonormality_penalty(model);
    return v;
}

void finish_report(BlockFactorModel& model) {
    auto& rep = model.report;
    rep.orthonormality.assign(model.order(), std::vector<double>(model.segment_count(), 0.0));
    for (std::size_t m = 0; m < model.order(); ++m)
        for (std::size_t s = 0; s < model.segment_count(); ++s)
            rep.orthonormality[m][s] = orthonormality_residual(model.segments[s].modes[m]);
    rep.penalty_term = orthonormality_penalty(model);
}

void run_als(const DenseTensor& data, BlockFactorModel& model, const BlockSolverConfig& config) {
    auto& rep = model.report;
    const double scale = data.squared_norm();
    rep.loss_trace = {objective(data, model, config)};
    rep.sweeps = 0;
    rep.converged = false;
    for (std::size_t sweep = 1; sweep <= config.max_iters; ++sweep) {
        bool singular = false;
        for (std::size_t m = 0; m < model.order(); ++m) {
            if (update_mode_impl(m, data, model, config) != StepStatus::ok) singular = true;
        }
        auto cores = solve_core(data, model);
        for (std::size_t s = 0; s < model.segment_count(); ++s) model.segments[s].core = std::move(cores[s]);
        if (singular) rep.singular_sweeps.push_back(sweep);
        const double prev = rep.loss_trace.back();
        const double loss = objective(data, model, config);
        rep.loss_trace.push_back(loss);
        rep.sweeps = sweep;
        if (scale > 0.0) rep.max_relative_increase = std::max(rep.max_relative_increase, (loss - prev) / scale);
        if (prev - loss <= config.eps * scale) {
            rep.converged = true;
            break;
        }
    }
    finish_report(model);
}

RankSpec segment_rank_spec(const BlockSolverConfig& config, std::size_t s) {
    if (config.segment_ranks.empty()) return config.ranks;
    if (s >= config.segment_ranks.size()) throw ConfigError("segment rank list shorter than the segment count");
    return config.segment_ranks[s];
}

BlockFactorModel empty_model(const DenseTensor& data, const HierarchySpec& spec) {
    BlockFactorModel model;
    model.hierarchy = spec;
    model.compositional = spec.compositional_flags();
    model.data_shape = data.shape();
    return model;
}

void set_lambdas(BlockFactorModel& model, double lambda) {
    model.lambdas = Matrix::Constant(idx(model.order()), idx(model.segment_count()), lambda);
}

void check_data(const DenseTensor& data, const HierarchySpec& spec) {
    if (data.order() < 2) throw DimensionError("block models need a measurement mode and at least one factor");
    if (data.extent(0) != spec.extent()) {
        throw DimensionError("hierarchy extent " + std::to_string(spec.extent()) + " does not match mode-0 extent " +
                             std::to_string(data.extent(0)));
    }
    if (!data.all_finite()) throw NumericalError("data tensor has non-finite entries");
}

void check_bank(const HierarchySpec& spec) {
    const auto bank = spec.leaf_bank();
    if (!bank.pass) {
        throw ConfigError("hierarchy leaves do not form a filter bank (deviation " + std::to_string(bank.max_deviation) + ")");
    }
}

} // namespace

std::vector<std::size_t> BlockSegment::ranks() const {
    std::vector<std::size_t> out;
    for (const auto& u : modes) out.push_back(static_cast<std::size_t>(u.cols()));
    return out;
}

bool BlockFactorModel::shared(std::size_t mode) const {
    return mode > 0 && mode - 1 < compositional.size() && compositional[mode - 1] == Compositionality::shared;
}

Matrix BlockFactorModel::mode_matrix(std::size_t mode) const {
    if (segments.empty()) throw DimensionError("model has no segments");
    if (shared(mode)) return segments[0].modes.at(mode);
    Index cols = 0;
    for (const auto& seg : segments) cols += seg.modes.at(mode).cols();
    Matrix out(segments[0].modes[mode].rows(), cols);
    Index offset = 0;
    for (const auto& seg : segments) {
        out.middleCols(offset, seg.modes[mode].cols()) = seg.modes[mode];
        offset += seg.modes[mode].cols();
    }
    return out;
}

DenseTensor BlockFactorModel::materialize_core() const {
    if (segments.empty()) throw DimensionError("model has no segments");
    const std::size_t m_count = order();
    Shape shape(m_count, 0);
    std::vector<std::vector<std::size_t>> offsets(segments.size(), std::vector<std::size_t>(m_count, 0));
    for (std::size_t m = 0; m < m_count; ++m) {
        for (std::size_t s = 0; s < segments.size(); ++s) {
            const auto width = static_cast<std::size_t>(segments[s].modes[m].cols());
            if (shared(m)) {
                shape[m] = width;
            } else {
                offsets[s][m] = shape[m];
                shape[m] += width;
            }
        }
    }
    DenseTensor out(shape);
    std::vector<std::size_t> local(m_count), global(m_count);
    for (std::size_t s = 0; s < segments.size(); ++s) {
        const auto& core = segments[s].core;
        std::fill(local.begin(), local.end(), 0);
        for (std::size_t n = 0; n < core.size(); ++n) {
            for (std::size_t m = 0; m < m_count; ++m) global[m] = local[m] + offsets[s][m];
            out(global) = core.data()[n];
            for (std::size_t m = 0; m < m_count; ++m) {
                if (++local[m] < core.extent(m)) break;
                local[m] = 0;
            }
        }
    }
    return out;
}

DenseTensor BlockFactorModel::reconstruct_segment(std::size_t s) const {
    const auto& seg = segments.at(s);
    return multi_mode_product(seg.core, seg.modes, /*transpose=*/false);
}

DenseTensor BlockFactorModel::reconstruct_via_selectors() const {
    std::vector<Matrix> modes;
    for (std::size_t m = 0; m < order(); ++m) modes.push_back(mode_matrix(m));
    return multi_mode_product(materialize_core(), modes, /*transpose=*/false);
}

FactorModel BlockFactorModel::segment_model(std::size_t s, bool restrict) const {
    const auto& seg = segments.at(s);
    FactorModel out;
    out.core = seg.core;
    out.modes = seg.modes;
    out.sigmas = seg.sigmas;
    if (restrict) out.modes[0] = restrict_rows(seg.modes[0], seg.support);
    return out;
}

DenseTensor reconstruct(const BlockFactorModel& model) {
    if (model.segments.empty()) throw DimensionError("model has no segments");
    DenseTensor out(model.data_shape);
    for (std::size_t s = 0; s < model.segment_count(); ++s) out += model.reconstruct_segment(s);
    return out;
}

double squared_loss(const DenseTensor& data, const BlockFactorModel& model) {
    return (data - reconstruct(model)).squared_norm();
}

double orthonormality_penalty(const BlockFactorModel& model) {
    double total = 0.0;
    for (std::size_t s = 0; s < model.segment_count(); ++s) {
        for (std::size_t m = 0; m < model.order(); ++m) {
            const double lambda = model.lambdas.size() ? model.lambdas(idx(m), idx(s)) : 0.0;
            total += penalty_of(model.segments[s].modes[m], lambda);
        }
    }
    return total;
}

void BlockSolverConfig::validate() const {
    if (!(eps > 0.0)) throw ConfigError("solver eps must be positive");
    if (!(lambda >= 0.0)) throw ConfigError("penalty weight must be non-negative");
}

std::vector<DenseTensor> solve_core(const DenseTensor& data, const BlockFactorModel& model) {
    const std::size_t segs = model.segment_count();
    if (segs == 0) throw DimensionError("solve_core: model has no segments");
    const std::size_t order = model.order();
    for (const auto& seg : model.segments) {
        for (const auto& u : seg.modes)
            if (u.cols() == 0) throw DimensionError("solve_core: empty block");
    }

    // Segments couple only when every pair of mode matrices overlaps.
    std::vector<std::size_t> parent(segs);
    std::iota(parent.begin(), parent.end(), 0);
    auto root = [&](std::size_t s) {
        while (parent[s] != s) s = parent[s] = parent[parent[s]];
        return s;
    };
    for (std::size_t s = 0; s < segs; ++s) {
        for (std::size_t t = s + 1; t < segs; ++t) {
            bool coupled = true;
            for (std::size_t m = 0; m < order && coupled; ++m) {
                coupled = (model.segments[s].modes[m].transpose() * model.segments[t].modes[m]).cwiseAbs().maxCoeff() > 0.0;
            }
            if (coupled) parent[root(s)] = root(t);
        }
    }
    std::map<std::size_t, std::vector<std::size_t>> components;
    for (std::size_t s = 0; s < segs; ++s) components[root(s)].push_back(s);

    std::vector<DenseTensor> cores(segs);
    for (const auto& [key, members] : components) {
        if (members.size() == 1) {
            const auto& seg = model.segments[members[0]];
            std::vector<Matrix> inverses;
            for (const auto& u : seg.modes) inverses.push_back(pinv(u));
            cores[members[0]] = multi_mode_product(data, inverses, /*transpose=*/false);
            continue;
        }
        std::vector<Index> offsets{0};
        for (std::size_t s : members) offsets.push_back(offsets.back() + idx(element_count(model.segments[s].ranks())));
        Matrix gram = Matrix::Zero(offsets.back(), offsets.back());
        Vector rhs(offsets.back());
        for (std::size_t a = 0; a < members.size(); ++a) {
            const auto& sa = model.segments[members[a]];
            rhs.segment(offsets[a], offsets[a + 1] - offsets[a]) = vec(multi_mode_product(data, sa.modes, /*transpose=*/true));
            for (std::size_t b = a; b < members.size(); ++b) {
                const auto& sb = model.segments[members[b]];
                Matrix block = sa.modes[order - 1].transpose() * sb.modes[order - 1];
                for (std::size_t m = order - 1; m-- > 0;) block = kronecker(block, sa.modes[m].transpose() * sb.modes[m]);
                gram.block(offsets[a], offsets[b], block.rows(), block.cols()) = block;
                if (b != a) gram.block(offsets[b], offsets[a], block.cols(), block.rows()) = block.transpose();
            }
        }
        const Vector solution = pinv(gram) * rhs;
        for (std::size_t a = 0; a < members.size(); ++a) {
            const Shape shape(model.segments[members[a]].ranks());
            cores[members[a]] = unvec(solution.segment(offsets[a], offsets[a + 1] - offsets[a]), shape);
        }
    }
    return cores;
}

Matrix update_mode_matrix(std::size_t mode, const DenseTensor& data, BlockFactorModel& model,
                          const BlockSolverConfig& config) {
    if (mode >= model.order()) throw DimensionError("mode index out of range");
    if (data.shape() != model.data_shape) throw DimensionError("data shape does not match the model");
    const auto status = update_mode_impl(mode, data, model, config);
    if (status == StepStatus::degenerate) {
        throw NumericalError("update_mode_matrix: singular system, every core contribution to mode " +
                             std::to_string(mode) + " is zero");
    }
    if (status == StepStatus::deficient) model.report.singular_sweeps.push_back(model.report.sweeps);
    return model.mode_matrix(mode);
}

BlockFactorModel block_initialize(const DenseTensor& data, const HierarchySpec& spec, const BlockSolverConfig& config) {
    config.validate();
    check_data(data, spec);
    check_bank(spec);
    BlockFactorModel model = empty_model(data, spec);
    const auto leaves = spec.leaves();
    model.segments.resize(leaves.size());
    const std::size_t order = data.order();

    for_each_segment(leaves.size(), config.parallel, [&](std::size_t s) {
        const auto& filter = spec.node(leaves[s]).filter;
        auto& seg = model.segments[s];
        seg.node = leaves[s];
        seg.support = filter.support();
        const DenseTensor chunk = gather_rows(segment(data, filter), seg.support);
        const FactorModel flat = mmode_svd(chunk, segment_rank_spec(config, s));
        seg.modes = flat.modes;
        seg.sigmas = flat.sigmas;
        seg.modes[0] = embed_rows(flat.modes[0], seg.support, data.extent(0));
    });

    for (std::size_t m = 1; m < order; ++m) {
        if (!model.shared(m)) continue;
        Index cols = 0;
        for (const auto& seg : model.segments) cols += seg.modes[m].cols();
        Matrix stacked(idx(data.extent(m)), cols);
        Index offset = 0;
        for (const auto& seg : model.segments) {
            stacked.middleCols(offset, seg.modes[m].cols()) = seg.modes[m] * seg.sigmas[m].asDiagonal();
            offset += seg.modes[m].cols();
        }
        const auto svd = thin_svd(stacked);
        const std::size_t rank = config.ranks.resolve(m, data.extent(m), svd.s);
        const Matrix u = complete_basis(svd.u.leftCols(std::min<Index>(svd.u.cols(), idx(rank))), rank);
        for (auto& seg : model.segments) {
            seg.modes[m] = u;
            seg.sigmas[m] = padded(svd.s, rank);
        }
    }
    set_lambdas(model, config.lambda);
    auto cores = solve_core(data, model);
    for (std::size_t s = 0; s < model.segment_count(); ++s) model.segments[s].core = std::move(cores[s]);
    model.report = {};
    model.report.loss_trace = {objective(data, model, config)};
    finish_report(model);
    return model;
}

BlockFactorModel block_mmode_svd(const DenseTensor& data, const HierarchySpec& spec, const BlockSolverConfig& config) {
    BlockFactorModel model = block_initialize(data, spec, config);
    run_als(data, model, config);
    return model;
}

BlockFactorModel factorize_independent_parts(const DenseTensor& data, const HierarchySpec& spec, const RankSpec& ranks,
                                             const BlockSolverConfig& config) {
    config.validate();
    check_data(data, spec);
    if (!spec.leaves_disjoint()) throw ConfigError("leaf supports overlap; run expand_overlaps first");
    check_bank(spec);
    for (std::size_t m = 1; m < data.order(); ++m) {
        if (spec.compositional(m) == Compositionality::shared) {
            throw ConfigError("independent parts need every factor fully compositional");
        }
    }
    BlockFactorModel model = empty_model(data, spec);
    const auto leaves = spec.leaves();
    model.segments.resize(leaves.size());
    std::vector<std::vector<double>> traces(leaves.size());
    std::vector<bool> converged(leaves.size(), false);
    for_each_segment(leaves.size(), config.parallel, [&](std::size_t s) {
        const auto& filter = spec.node(leaves[s]).filter;
        auto& seg = model.segments[s];
        seg.node = leaves[s];
        seg.support = filter.support();
        const DenseTensor chunk = gather_rows(segment(data, filter), seg.support);
        const RankSpec& rs = config.segment_ranks.empty() ? ranks : config.segment_ranks.at(s);
        auto refined = hooi_refine(chunk, mmode_svd(chunk, rs), config.eps, config.max_iters);
        seg.core = std::move(refined.model.core);
        seg.modes = std::move(refined.model.modes);
        seg.sigmas = std::move(refined.model.sigmas);
        seg.modes[0] = embed_rows(seg.modes[0], seg.support, data.extent(0));
        traces[s] = std::move(refined.loss_trace);
        converged[s] = refined.converged;
    });
    set_lambdas(model, config.lambda);
    // Parts are independent, so the total loss per sweep is the sum of the
    // part traces (a finished part keeps its last value).
    std::size_t longest = 0;
    for (const auto& t : traces) longest = std::max(longest, t.size());
    model.report.loss_trace.assign(longest, 0.0);
    for (const auto& t : traces)
        for (std::size_t i = 0; i < longest; ++i) model.report.loss_trace[i] += t[std::min(i, t.size() - 1)];
    model.report.sweeps = longest - 1;
    model.report.converged = std::all_of(converged.begin(), converged.end(), [](bool c) { return c; });
    finish_report(model);
    return model;
}

BlockFactorModel factorize_overlapping_shared_rank(const DenseTensor& data, std::size_t terms,
                                                   const std::vector<std::size_t>& ranks,
                                                   const BlockSolverConfig& config) {
    config.validate();
    if (terms == 0) throw ConfigError("need at least one term");
    if (ranks.size() != data.order()) {
        throw DimensionError("rank list has " + std::to_string(ranks.size()) + " entries for an order-" +
                             std::to_string(data.order()) + " tensor");
    }
    for (std::size_t m = 0; m < ranks.size(); ++m) {
        if (ranks[m] == 0 || ranks[m] > data.extent(m)) {
            throw DimensionError("rank " + std::to_string(ranks[m]) + " is invalid for mode " + std::to_string(m));
        }
    }
    const std::size_t extent = data.extent(0);
    std::vector<NodeConfig> nodes{{"whole", "", SegmentFilter::identity(extent)}};
    for (std::size_t s = 0; s < terms; ++s) nodes.push_back({"term" + std::to_string(s), "whole", SegmentFilter::identity(extent)});
    HierarchySpec spec(extent, nodes);
    check_data(data, spec);

    BlockFactorModel model = empty_model(data, spec);
    DenseTensor residual = data;
    const auto leaves = spec.leaves();
    for (std::size_t s = 0; s < terms; ++s) {
        // Greedy deflation: each term starts from the best rank-J fit of what
        // the previous terms left over.
        const auto fit = hooi_refine(residual, mmode_svd(residual, RankSpec::fixed(ranks)), 1e-12, 20).model;
        BlockSegment seg;
        seg.node = leaves[s];
        seg.support = spec.node(leaves[s]).filter.support();
        seg.core = fit.core;
        seg.modes = fit.modes;
        seg.sigmas = fit.sigmas;
        residual -= reconstruct(fit);
        model.segments.push_back(std::move(seg));
    }
    set_lambdas(model, config.lambda);
    auto cores = solve_core(data, model);
    for (std::size_t s = 0; s < terms; ++s) model.segments[s].core = std::move(cores[s]);
    run_als(data, model, config);
    return model;
}

std::string solver_report_json(const BlockFactorModel& model) {
    using nlohmann::json;
    const auto& rep = model.report;
    json blocks = json::array();
    for (std::size_t s = 0; s < model.segment_count(); ++s) {
        const auto& seg = model.segments[s];
        json orth = json::array();
        for (std::size_t m = 0; m < model.order(); ++m) {
            orth.push_back(m < rep.orthonormality.size() ? rep.orthonormality[m][s] : 0.0);
        }
        blocks.push_back({{"segment", s},
                          {"node", model.hierarchy.node_count() ? model.hierarchy.node(seg.node).id : std::string{}},
                          {"ranks", seg.ranks()},
                          {"orthonormality_residual", orth}});
    }
    json doc{{"loss_trace", rep.loss_trace},
             {"sweeps", rep.sweeps},
             {"converged", rep.converged},
             {"max_relative_increase", rep.max_relative_increase},
             {"singular_sweeps", rep.singular_sweeps},
             {"penalty_term", rep.penalty_term},
             {"blocks", blocks}};
    return doc.dump(2);
}

} // namespace mmb
