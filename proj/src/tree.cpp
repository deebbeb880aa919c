#include "sdetree/tree.hpp"

#include <cmath>
#include <string>

#include "sdetree/rng.hpp"

namespace sdetree {

TreeTopology::TreeTopology(int horizon, Vec support, Vec prob)
    : horizon_(horizon), support_(std::move(support)), prob_(std::move(prob)) {
    if (horizon_ < 1) throw UsageError("horizon must be >= 1");
    const auto q = support_.size();
    if (q < 2) throw UsageError("branching must be >= 2");
    if (prob_.size() != q) throw ShapeError("support and probability sizes differ");
    for (Eigen::Index j = 0; j < q; ++j) {
        if (!(prob_(j) >= 0.0 && prob_(j) <= 1.0))
            throw UsageError("branch probability outside [0,1] at branch " + std::to_string(j));
    }
    const double mass = prob_.sum();
    const double mean = prob_.dot(support_);
    const double second = prob_.dot(support_.cwiseProduct(support_));
    if (std::abs(mass - 1.0) > 1e-14) throw UsageError("branch probabilities must sum to 1");
    if (std::abs(mean) > 1e-14) throw UsageError("noise law must have zero mean");
    if (std::abs(second - 1.0) > 1e-12) throw UsageError("noise law must have unit second moment");

    level_size_.resize(static_cast<std::size_t>(horizon_) + 1);
    level_size_[0] = 1;
    for (int k = 1; k <= horizon_; ++k) {
        level_size_[k] = level_size_[k - 1] * q;
        if (level_size_[k] > (std::int64_t{1} << 40))
            throw UsageError("tree too large: q^k overflows the desk-scale budget");
    }
}

TreeTopology TreeTopology::rademacher(int horizon) {
    Vec w(2), p(2);
    w << 1.0, -1.0;
    p << 0.5, 0.5;
    return TreeTopology(horizon, std::move(w), std::move(p));
}

std::int64_t TreeTopology::level_size(int level) const {
    if (level < 0 || level > horizon_) throw ShapeError("level outside [0, N]");
    return level_size_[static_cast<std::size_t>(level)];
}

NodeId TreeTopology::child(NodeId v, int j) const {
    if (v.level >= horizon_) throw ShapeError("terminal node has no children");
    if (j < 0 || j >= branching()) throw ShapeError("branch index out of range");
    return NodeId{v.level + 1, v.index * branching() + j};
}

NodeId TreeTopology::parent(NodeId v) const {
    if (v.level <= 0) throw ShapeError("root node has no parent");
    return NodeId{v.level - 1, v.index / branching()};
}

double TreeTopology::node_prob(NodeId v) const {
    const int q = branching();
    double p = 1.0;
    std::int64_t idx = v.index;
    for (int l = 0; l < v.level; ++l) {
        p *= prob_(static_cast<Eigen::Index>(idx % q));
        idx /= q;
    }
    return p;
}

AdaptedProcess::AdaptedProcess(const TreeTopology& topology, int dim, int first_time,
                               int last_time)
    : dim_(dim), first_time_(first_time) {
    if (dim < 1) throw UsageError("process dimension must be >= 1");
    if (first_time < 0 || last_time > topology.horizon() || first_time > last_time)
        throw ShapeError("process time range outside [0, N]");
    fields_.reserve(static_cast<std::size_t>(last_time - first_time + 1));
    for (int k = first_time; k <= last_time; ++k)
        fields_.push_back(Mat::Zero(dim, topology.level_size(k)));
}

Mat& AdaptedProcess::field(int k) {
    return const_cast<Mat&>(static_cast<const AdaptedProcess*>(this)->field(k));
}

const Mat& AdaptedProcess::field(int k) const {
    const int i = k - first_time_;
    if (i < 0 || i >= static_cast<int>(fields_.size()))
        throw ShapeError("time index " + std::to_string(k) + " outside process range");
    return fields_[static_cast<std::size_t>(i)];
}

bool AdaptedProcess::all_finite() const {
    for (const auto& f : fields_)
        if (!f.allFinite()) return false;
    return true;
}

CondPair cond_prev(const Mat& field_next, int next_level, const TreeTopology& topology) {
    if (next_level < 1 || next_level > topology.horizon())
        throw ShapeError("cond_prev needs a level in [1, N]");
    if (field_next.cols() != topology.level_size(next_level))
        throw ShapeError("field size does not match level " + std::to_string(next_level));
    const int q = topology.branching();
    const std::int64_t parents = topology.level_size(next_level - 1);
    CondPair out;
    out.mean = Mat::Zero(field_next.rows(), parents);
    out.weighted = Mat::Zero(field_next.rows(), parents);
    for (std::int64_t v = 0; v < parents; ++v) {
        for (int j = 0; j < q; ++j) {
            const auto col = field_next.col(v * q + j);
            out.mean.col(v) += topology.branch_prob(j) * col;
            out.weighted.col(v) += topology.branch_prob(j) * topology.shock(j) * col;
        }
    }
    return out;
}

double expectation_sq(const Mat& field, int level, const TreeTopology& topology) {
    if (field.cols() != topology.level_size(level))
        throw ShapeError("field size does not match level " + std::to_string(level));
    double acc = 0.0;
    for (std::int64_t v = 0; v < field.cols(); ++v)
        acc += topology.node_prob(NodeId{level, v}) * field.col(v).squaredNorm();
    return acc;
}

double expectation_inner(const Mat& a, const Mat& b, int level, const TreeTopology& topology) {
    if (a.cols() != topology.level_size(level) || b.cols() != a.cols() || b.rows() != a.rows())
        throw ShapeError("mismatched fields in expectation_inner");
    double acc = 0.0;
    for (std::int64_t v = 0; v < a.cols(); ++v)
        acc += topology.node_prob(NodeId{level, v}) * a.col(v).dot(b.col(v));
    return acc;
}

double n2_sq(const AdaptedProcess& p, const TreeTopology& topology) {
    double acc = 0.0;
    for (int k = p.first_time(); k <= p.last_time(); ++k)
        acc += expectation_sq(p.field(k), k, topology);
    return acc;
}

double aggregate(const AdaptedProcess& p, NormKind kind, const TreeTopology& topology) {
    if (kind != NormKind::N2)
        throw UsageError("only the N2 norm applies to a single process");
    return n2_sq(p, topology);
}

AdaptedProcess random_adapted(const TreeTopology& topology, int dim, int first_time,
                              int last_time, std::uint64_t seed) {
    AdaptedProcess out(topology, dim, first_time, last_time);
    Rng rng(seed);
    for (int k = first_time; k <= last_time; ++k) {
        Mat& f = out.field(k);
        for (Eigen::Index c = 0; c < f.cols(); ++c)
            for (Eigen::Index r = 0; r < f.rows(); ++r) f(r, c) = rng.gauss();
    }
    return out;
}

}  // namespace sdetree
