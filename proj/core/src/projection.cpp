#include "mmblock/projection.hpp"

#include "mmblock/error.hpp"
#include "mmblock/linalg.hpp"

#include "detail.hpp"

#include <map>

namespace mmb {

FactorRepresentation multilinear_project(const FactorModel& model, const Vector& observation) {
    const DenseTensor t = model.extended_core();
    if (t.order() < 2) throw DimensionError("projection needs at least one causal factor");
    if (static_cast<std::size_t>(observation.size()) != t.extent(0)) {
        throw DimensionError("observation length " + std::to_string(observation.size()) + " does not match I_0 = " +
                             std::to_string(t.extent(0)));
    }
    Vector centered = observation;
    if (model.mean.size() > 0) centered -= model.mean;
    const Vector r = pinv(matrixize(t, 0)) * centered;
    if (r.norm() <= 1e-13 * std::max(1.0, centered.norm())) {
        throw NumericalError("projection has no direction: the observation projects to zero");
    }
    const Shape reduced(t.shape().begin() + 1, t.shape().end());
    const auto fit = rank1_cp(unvec(r, reduced));

    FactorRepresentation rep;
    rep.factors.resize(t.order());
    rep.scale = fit.factors[0].norm();
    rep.factors[1] = fit.factors[0] / rep.scale;
    for (std::size_t c = 2; c < t.order(); ++c) rep.factors[c] = fit.factors[c - 1];
    rep.residual = fit.residual;
    rep.degenerate = fit.degenerate;
    return rep;
}

std::vector<LabelGuess> infer_labels(const FactorRepresentation& rep, const std::vector<Matrix>& modes) {
    if (rep.factors.size() != modes.size()) throw DimensionError("representation and model have different orders");
    std::vector<LabelGuess> out;
    for (std::size_t c = 1; c < modes.size(); ++c) {
        const Matrix& u = modes[c];
        const Vector& r = rep.factors[c];
        if (r.size() != u.cols()) throw DimensionError("representation length does not match J_" + std::to_string(c));
        LabelGuess best;
        best.score = -1.0;
        const double rn = r.norm();
        for (Eigen::Index i = 0; i < u.rows(); ++i) {
            const double un = u.row(i).norm();
            const double score = (un == 0.0 || rn == 0.0) ? 0.0 : std::abs(u.row(i).dot(r)) / (un * rn);
            if (score > best.score) {
                best.score = score;
                best.index = static_cast<std::size_t>(i);
            }
        }
        best.score = std::max(best.score, 0.0);
        best.low_confidence = best.score < kLowConfidenceScore;
        out.push_back(best);
    }
    return out;
}

std::vector<LabelGuess> infer_labels(const FactorRepresentation& rep, const FactorModel& model) {
    return infer_labels(rep, model.modes);
}

BlockProjection project_block(const BlockFactorModel& model, const Vector& observation,
                              const std::vector<bool>& visible) {
    const auto extent = model.data_shape.at(0);
    if (static_cast<std::size_t>(observation.size()) != extent) throw DimensionError("observation length does not match I_0");
    if (visible.size() != extent) throw DimensionError("visibility mask length does not match I_0");

    BlockProjection out;
    for (std::size_t s = 0; s < model.segment_count(); ++s) {
        const auto& support = model.segments[s].support;
        const bool seen = std::all_of(support.begin(), support.end(), [&](std::size_t i) { return visible[i]; });
        if (!seen) continue;
        Vector part(static_cast<Eigen::Index>(support.size()));
        for (std::size_t r = 0; r < support.size(); ++r) part(static_cast<Eigen::Index>(r)) = observation(static_cast<Eigen::Index>(support[r]));
        const FactorModel local = model.segment_model(s, /*restrict_rows=*/true);
        SegmentProjection proj;
        proj.segment = s;
        proj.representation = multilinear_project(local, part);
        proj.labels = infer_labels(proj.representation, local);
        out.segments.push_back(std::move(proj));
    }
    if (out.segments.empty()) throw NumericalError("no segment is fully visible");

    const std::size_t factors = model.order() - 1;
    for (std::size_t c = 0; c < factors; ++c) {
        std::map<std::size_t, double> votes;
        for (const auto& seg : out.segments) votes[seg.labels[c].index] += seg.labels[c].score;
        LabelGuess best;
        best.score = -1.0;
        for (const auto& [index, weight] : votes) {
            if (weight > best.score) {
                best.score = weight;
                best.index = index;
            }
        }
        // Report the winner's mean score so it stays comparable to a single segment.
        std::size_t count = 0;
        for (const auto& seg : out.segments) count += seg.labels[c].index == best.index ? 1 : 0;
        best.score = count ? best.score / static_cast<double>(count) : 0.0;
        best.low_confidence = best.score < kLowConfidenceScore;
        out.labels.push_back(best);
    }
    return out;
}

} // namespace mmb
