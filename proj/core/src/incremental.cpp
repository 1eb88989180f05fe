#include "mmblock/incremental.hpp"

#include "mmblock/error.hpp"
#include "mmblock/linalg.hpp"

#include "detail.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <thread>

namespace mmb {

namespace {

using detail::idx;

/// Singular values at or below this fraction of the largest count as zero.
double zero_cutoff(const Matrix& m, const Vector& s) {
    if (s.size() == 0) return 0.0;
    return static_cast<double>(std::max(m.rows(), m.cols())) * std::numeric_limits<double>::epsilon() * s(0);
}

std::size_t positive_count(const Vector& s, double cutoff) {
    std::size_t n = 0;
    while (n < static_cast<std::size_t>(s.size()) && s(idx(n)) > cutoff) ++n;
    return n;
}

DenseTensor normalize_core(const DenseTensor& core, const std::vector<Vector>& sigma) {
    std::vector<Matrix> scale(core.order());
    for (std::size_t c = 1; c < core.order(); ++c) scale[c] = sigma[c].cwiseInverse().asDiagonal();
    return multi_mode_product(core, scale, /*transpose=*/false);
}

/// Runs `jobs` tasks, handing some to new threads while the budget allows.
class ThreadBudget {
public:
    explicit ThreadBudget(std::size_t extra) : available_(static_cast<long>(extra)) {}

    void run(std::vector<std::function<void()>>& jobs) {
        std::vector<std::thread> threads;
        std::vector<std::exception_ptr> errors(jobs.size());
        for (std::size_t j = 0; j < jobs.size(); ++j) {
            const bool last = j + 1 == jobs.size();
            if (!last && acquire()) {
                threads.emplace_back([&, j] {
                    try {
                        jobs[j]();
                    } catch (...) {
                        errors[j] = std::current_exception();
                    }
                    available_.fetch_add(1);
                });
            } else {
                try {
                    jobs[j]();
                } catch (...) {
                    errors[j] = std::current_exception();
                }
            }
        }
        for (auto& t : threads) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

private:
    bool acquire() {
        long current = available_.load();
        while (current > 0) {
            if (available_.compare_exchange_weak(current, current - 1)) return true;
        }
        return false;
    }

    std::atomic<long> available_;
};

std::size_t thread_limit(std::size_t requested) {
    if (requested > 0) return requested;
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

} // namespace

DenseTensor ChildFactorization::reconstruct() const {
    return multi_mode_product(core, u, /*transpose=*/false);
}

FactorModel ChildFactorization::to_factor_model() const {
    FactorModel out;
    out.core = core;
    out.modes = u;
    out.modes[0] = Matrix::Identity(idx(core.extent(0)), idx(core.extent(0)));
    out.sigmas = sigma;
    out.sigmas[0] = Vector::Ones(idx(core.extent(0)));
    return out;
}

ChildFactorization leaf_factorize(const DenseTensor& leaf, const std::vector<std::size_t>& support,
                                  const RankSpec& ranks) {
    if (leaf.order() < 2) throw DimensionError("leaf_factorize: need at least one causal mode");
    if (!leaf.all_finite()) throw NumericalError("leaf_factorize: non-finite data");
    const std::size_t order = leaf.order();
    ChildFactorization out;
    out.support = support;
    out.u.resize(order);
    out.sigma.resize(order);
    out.v.resize(order);
    for (std::size_t c = 1; c < order; ++c) {
        const Matrix unfolded = matrixize(leaf, c);
        const auto svd = thin_svd(unfolded);
        const std::size_t requested = ranks.resolve(c, leaf.extent(c), svd.s);
        const std::size_t keep = std::min(requested, positive_count(svd.s, zero_cutoff(unfolded, svd.s)));
        if (keep == 0) {
            throw NumericalError("leaf_factorize: mode " + std::to_string(c) + " keeps no positive singular value");
        }
        out.u[c] = svd.u.leftCols(idx(keep));
        out.sigma[c] = svd.s.head(idx(keep));
        out.v[c] = svd.v.leftCols(idx(keep));
        out.truncation += svd.s.tail(svd.s.size() - idx(keep)).squaredNorm();
    }
    out.truncation = std::sqrt(out.truncation);
    out.core = multi_mode_product(leaf, out.u, /*transpose=*/true);
    out.normalized_core = normalize_core(out.core, out.sigma);
    return out;
}

MergedMode merge_children_mode(std::size_t mode, const std::vector<ChildFactorization>& children,
                               const IncrementalOptions& options) {
    if (children.empty()) throw DimensionError("merge_children_mode: no children");
    if (mode == 0) throw DimensionError("merge_children_mode: the measurement mode is not merged");
    Eigen::Index rows = -1, cols = 0;
    for (const auto& child : children) {
        if (mode >= child.u.size() || child.u[mode].size() == 0) throw DimensionError("child lacks a factor for this mode");
        if (rows >= 0 && child.u[mode].rows() != rows) throw DimensionError("children disagree on the mode extent");
        rows = child.u[mode].rows();
        cols += child.u[mode].cols();
    }
    Matrix stacked(rows, cols);
    Eigen::Index offset = 0;
    for (const auto& child : children) {
        stacked.middleCols(offset, child.u[mode].cols()) = child.u[mode] * child.sigma[mode].asDiagonal();
        offset += child.u[mode].cols();
    }

    Matrix u;
    Vector s;
    Matrix v;
    if (options.direct_merge) {
        auto svd = thin_svd(stacked);
        u = std::move(svd.u);
        s = std::move(svd.s);
        v = std::move(svd.v);
    } else {
        const auto qr = thin_qr(stacked);
        auto svd = thin_svd(qr.r);
        u = qr.q * svd.u;
        s = std::move(svd.s);
        v = std::move(svd.v);
        normalize_signs(u, &v);
    }
    const std::size_t requested = options.ranks.resolve(mode, static_cast<std::size_t>(rows), s);
    const std::size_t keep = std::min(requested, positive_count(s, zero_cutoff(stacked, s)));
    if (keep == 0) throw NumericalError("merge_children_mode: all singular values are zero");

    MergedMode out;
    out.u = u.leftCols(idx(keep));
    out.sigma = s.head(idx(keep));
    out.truncation = std::sqrt(s.tail(s.size() - idx(keep)).squaredNorm());
    offset = 0;
    for (const auto& child : children) {
        out.v_blocks.push_back(v.block(offset, 0, child.u[mode].cols(), idx(keep)));
        offset += child.u[mode].cols();
    }
    return out;
}

DenseTensor parent_core(const std::vector<ChildFactorization>& children, const std::vector<MergedMode>& merged) {
    if (children.empty()) throw DimensionError("parent_core: no children");
    const std::size_t order = children[0].order();
    if (merged.size() != order) throw DimensionError("parent_core: merged factors missing");
    DenseTensor out;
    for (std::size_t k = 0; k < children.size(); ++k) {
        std::vector<Matrix> maps(order);
        for (std::size_t c = 1; c < order; ++c) {
            if (merged[c].v_blocks.size() != children.size()) throw DimensionError("parent_core: merged factors missing");
            maps[c] = merged[c].sigma.asDiagonal() * merged[c].v_blocks[k].transpose();
        }
        DenseTensor part = multi_mode_product(children[k].normalized_core, maps, /*transpose=*/false);
        if (k == 0) {
            out = std::move(part);
        } else {
            out += part;
        }
    }
    return out;
}

ChildFactorization merge_children(const std::vector<ChildFactorization>& children,
                                  const std::vector<std::size_t>& support, const IncrementalOptions& options) {
    if (children.empty()) throw DimensionError("merge_children: no children");
    const std::size_t order = children[0].order();
    std::vector<MergedMode> merged(order);
    for (std::size_t c = 1; c < order; ++c) merged[c] = merge_children_mode(c, children, options);
    ChildFactorization out;
    out.support = support;
    out.u.resize(order);
    out.sigma.resize(order);
    out.v.resize(order);
    double dropped = 0.0;
    for (std::size_t c = 1; c < order; ++c) {
        out.u[c] = merged[c].u;
        out.sigma[c] = merged[c].sigma;
        Eigen::Index rows = 0;
        for (const auto& b : merged[c].v_blocks) rows += b.rows();
        out.v[c].resize(rows, merged[c].sigma.size());
        rows = 0;
        for (const auto& b : merged[c].v_blocks) {
            out.v[c].middleRows(rows, b.rows()) = b;
            rows += b.rows();
        }
        dropped += merged[c].truncation * merged[c].truncation;
    }
    out.truncation = std::sqrt(dropped);
    out.core = parent_core(children, merged);
    out.normalized_core = normalize_core(out.core, out.sigma);
    return out;
}

BlockFactorModel IncrementalModel::to_block_model(bool leaves_only) const {
    BlockFactorModel out;
    out.hierarchy = hierarchy;
    out.compositional = hierarchy.compositional_flags();
    out.data_shape = data_shape;
    std::vector<std::size_t> which;
    if (leaves_only) {
        which = hierarchy.leaves();
    } else {
        which = {hierarchy.root()};
    }
    for (std::size_t node : which) {
        const auto& fact = nodes.at(node);
        BlockSegment seg;
        seg.node = node;
        seg.support = fact.support;
        seg.core = detail::gather_rows(fact.core, fact.support);
        seg.modes = fact.u;
        seg.modes[0] = detail::selection_matrix(fact.support, data_shape[0]);
        seg.sigmas = fact.sigma;
        seg.sigmas[0] = Vector::Ones(idx(fact.support.size()));
        out.segments.push_back(std::move(seg));
    }
    out.lambdas = Matrix::Constant(idx(out.order()), idx(out.segment_count()), 1.0);
    return out;
}

IncrementalModel incremental_block_svd(const DenseTensor& data, const HierarchySpec& spec,
                                       const IncrementalOptions& options) {
    if (data.order() < 2) throw DimensionError("incremental_block_svd: need at least one causal mode");
    if (data.extent(0) != spec.extent()) throw DimensionError("hierarchy extent does not match mode-0 extent");
    if (spec.node_count() == 0) throw ConfigError("empty hierarchy");
    if (!spec.leaves_disjoint()) throw ConfigError("leaf supports overlap; run expand_overlaps first");

    IncrementalModel model;
    model.hierarchy = spec;
    model.data_shape = data.shape();
    model.nodes.resize(spec.node_count());
    model.new_data.resize(spec.node_count());
    ThreadBudget budget(options.parallel ? thread_limit(options.max_threads) - 1 : 0);

    std::function<void(std::size_t)> build = [&](std::size_t i) {
        const auto& node = spec.node(i);
        if (node.children.empty()) {
            model.nodes[i] = leaf_factorize(segment(data, node.filter), node.filter.support(), options.ranks);
            return;
        }
        std::vector<std::function<void()>> jobs;
        for (std::size_t c : node.children) jobs.emplace_back([&, c] { build(c); });
        budget.run(jobs);

        std::vector<ChildFactorization> children;
        std::vector<std::size_t> covered;
        for (std::size_t c : node.children) {
            children.push_back(model.nodes[c]);
            covered = detail::sorted_union(covered, model.nodes[c].support);
        }
        std::vector<std::size_t> rest;
        std::set_difference(node.filter.support().begin(), node.filter.support().end(), covered.begin(), covered.end(),
                            std::back_inserter(rest));
        if (!rest.empty()) {
            const auto filter = SegmentFilter::block(rest);
            model.new_data[i] = leaf_factorize(segment(data, filter), rest, options.ranks);
            children.push_back(*model.new_data[i]);
        }
        model.nodes[i] = merge_children(children, detail::sorted_union(covered, rest), options);
    };
    build(spec.root());
    return model;
}

IncrementalModel append_batch(const IncrementalModel& model, const DenseTensor& batch,
                              const std::vector<std::size_t>& support, const IncrementalOptions& options) {
    if (batch.shape() != model.data_shape) throw DimensionError("batch shape does not match the model");
    const auto filter = SegmentFilter::block(support);
    const auto& covered = model.root().support;
    std::vector<std::size_t> overlap;
    std::set_intersection(covered.begin(), covered.end(), filter.support().begin(), filter.support().end(),
                          std::back_inserter(overlap));
    if (!overlap.empty()) throw ConfigError("batch rows are already covered by the model");

    const auto leaf = leaf_factorize(segment(batch, filter), filter.support(), options.ranks);
    const auto merged = merge_children({model.root(), leaf}, detail::sorted_union(covered, filter.support()), options);

    // Extend the tree: the batch becomes one more child of the root.
    auto configs = model.hierarchy.to_configs();
    const auto root_id = model.hierarchy.node(model.hierarchy.root()).id;
    std::size_t n = 0;
    while (model.hierarchy.find("batch" + std::to_string(n))) ++n;
    const std::string batch_id = "batch" + std::to_string(n);
    for (auto& cfg : configs) {
        if (cfg.id == root_id && cfg.filter.kind() == SegmentFilter::Kind::block_identity) {
            cfg.filter = SegmentFilter::block(detail::sorted_union(cfg.filter.support(), filter.support()));
        }
    }
    configs.push_back({batch_id, root_id, filter});

    IncrementalModel out;
    out.hierarchy = HierarchySpec(model.hierarchy.extent(), configs, model.hierarchy.compositional_flags());
    out.data_shape = model.data_shape;
    out.nodes.resize(out.hierarchy.node_count());
    out.new_data.resize(out.hierarchy.node_count());
    for (std::size_t i = 0; i < model.hierarchy.node_count(); ++i) {
        const auto j = *out.hierarchy.find(model.hierarchy.node(i).id);
        out.nodes[j] = model.nodes[i];
        out.new_data[j] = model.new_data[i];
    }
    out.nodes[*out.hierarchy.find(batch_id)] = leaf;
    out.nodes[out.hierarchy.root()] = merged;
    return out;
}

BlockFactorModel apply_general_filters(const BlockFactorModel& model, const std::vector<Matrix>& filters) {
    if (filters.size() != model.segment_count()) throw DimensionError("need one filter per segment");
    BlockFactorModel out = model;
    const auto extent = idx(model.data_shape.at(0));
    for (std::size_t s = 0; s < filters.size(); ++s) {
        const Matrix& f = filters[s];
        if (f.size() == 0) continue;
        if (f.rows() != extent || f.cols() != extent) throw DimensionError("filter is not conformable with mode 0");
        auto& seg = out.segments[s];
        seg.modes[0] = f * seg.modes[0];
        std::vector<std::size_t> support;
        for (Eigen::Index r = 0; r < extent; ++r) {
            if (seg.modes[0].row(r).cwiseAbs().maxCoeff() > 0.0 || (std::binary_search(seg.support.begin(), seg.support.end(), static_cast<std::size_t>(r)))) {
                support.push_back(static_cast<std::size_t>(r));
            }
        }
        seg.support = std::move(support);
    }
    return out;
}

BlockFactorModel apply_general_filters(const BlockFactorModel& model, const std::vector<SegmentFilter>& filters) {
    std::vector<Matrix> mats;
    for (const auto& f : filters) mats.push_back(f.general_part(model.data_shape.at(0)));
    return apply_general_filters(model, mats);
}

CostModel predict_cost(std::size_t n, std::size_t m, double t) {
    if (m == 0 || m > 20) throw DimensionError("order must be between 1 and 20");
    if (n == 0) throw DimensionError("entry count must be positive");
    CostModel out;
    out.n = n;
    out.m = m;
    out.k = std::size_t{1} << m;
    out.t = t;
    std::size_t power = 1, exponent = 0;
    while (power < n) {
        power *= out.k;
        ++exponent;
    }
    out.conforming = power == n;
    out.log_k_n = static_cast<double>(exponent);
    out.levels = exponent + 1;
    out.segments = static_cast<double>(n) * out.log_k_n + 1.0;
    out.serial_cost = t * static_cast<double>(n) * out.log_k_n;
    out.distributed_cost = t * out.log_k_n;
    return out;
}

Shape subdivision_shape(std::size_t n, std::size_t m) {
    if (m == 0) throw DimensionError("order must be positive");
    if (n == 0 || (n & (n - 1)) != 0) throw DimensionError("entry count must be a power of two");
    Shape shape(m, 1);
    for (std::size_t e = 0; (std::size_t{1} << e) < n; ++e) shape[e % m] *= 2;
    return shape;
}

std::vector<SubdivisionBox> enumerate_subdivision(std::size_t n, std::size_t m) {
    std::vector<SubdivisionBox> boxes{{std::vector<std::size_t>(m, 0), subdivision_shape(n, m), 0}};
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const SubdivisionBox box = boxes[i];
        std::vector<std::size_t> split;
        for (std::size_t d = 0; d < m; ++d)
            if (box.shape[d] > 1) split.push_back(d);
        if (split.empty()) continue;
        for (std::size_t code = 0; code < (std::size_t{1} << split.size()); ++code) {
            SubdivisionBox child{box.offset, box.shape, box.level + 1};
            for (std::size_t b = 0; b < split.size(); ++b) {
                const std::size_t d = split[b];
                child.shape[d] = box.shape[d] / 2;
                if ((code >> b) & 1U) child.offset[d] += child.shape[d];
            }
            boxes.push_back(std::move(child));
        }
    }
    return boxes;
}

namespace {

DenseTensor extract_box(const DenseTensor& t, const std::vector<std::size_t>& offset, const Shape& shape) {
    DenseTensor out(shape);
    std::vector<std::size_t> local(shape.size(), 0), global(shape.size());
    for (std::size_t n = 0; n < out.size(); ++n) {
        for (std::size_t d = 0; d < shape.size(); ++d) global[d] = offset[d] + local[d];
        out.data()[n] = t(global);
        for (std::size_t d = 0; d < shape.size(); ++d) {
            if (++local[d] < shape[d]) break;
            local[d] = 0;
        }
    }
    return out;
}

} // namespace

CostSample measure_cost(std::size_t n, std::size_t m, std::size_t threads, std::size_t block, unsigned long long seed) {
    if (block == 0) throw DimensionError("block size must be positive");
    const auto boxes = enumerate_subdivision(n, m);
    Shape shape = subdivision_shape(n, m);
    for (auto& e : shape) e *= block;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    DenseTensor data(shape);
    for (double& v : data.data()) v = normal(rng);

    auto work = [&](const SubdivisionBox& box) {
        std::vector<std::size_t> offset(box.offset);
        Shape extent(box.shape);
        for (std::size_t d = 0; d < m; ++d) {
            offset[d] *= block;
            extent[d] *= block;
        }
        // Order-1 boxes are still factorized as a single mode.
        const auto segment_tensor = extract_box(data, offset, extent);
        volatile double sink = mmode_svd(segment_tensor, RankSpec::full()).core.frobenius_norm();
        (void)sink;
    };

    using clock = std::chrono::steady_clock;
    auto start = clock::now();
    for (const auto& box : boxes) work(box);
    const double serial = std::chrono::duration<double>(clock::now() - start).count();

    std::map<std::size_t, std::vector<const SubdivisionBox*>> levels;
    for (const auto& box : boxes) levels[box.level].push_back(&box);
    const std::size_t workers = std::max<std::size_t>(1, threads);
    start = clock::now();
    // Deepest level first; finishing a level is the merge barrier.
    for (auto it = levels.rbegin(); it != levels.rend(); ++it) {
        const auto& level = it->second;
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < std::min(workers, level.size()); ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < level.size(); i = next++) work(*level[i]);
            });
        }
        for (auto& t : pool) t.join();
    }
    const double parallel = std::chrono::duration<double>(clock::now() - start).count();

    const auto predicted = predict_cost(n, m);
    return {n, m, predicted.k, predicted.segments, boxes.size(), serial, parallel};
}

std::string cost_csv_header() { return "N,M,K,S_predicted,S_measured,wall_time_serial,wall_time_parallel"; }

std::string cost_csv_row(const CostSample& s) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%.10g,%zu,%.6f,%.6f", s.n, s.m, s.k, s.s_predicted, s.s_measured,
                  s.wall_time_serial, s.wall_time_parallel);
    return buf;
}

} // namespace mmb
