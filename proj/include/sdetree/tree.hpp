#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "sdetree/errors.hpp"

namespace sdetree {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// One atom of F_{k-1}: the tree node reached by the noise history
/// (w_0, ..., w_{k-1}). Children of a level-k node sit at level k+1; child j
/// corresponds to the realization w_k = support(j).
struct NodeId {
    int level = 0;
    std::int64_t index = 0;
};

/// The finite filtration: a non-recombining q-ary tree over `horizon` steps.
/// The per-step noise is a scalar q-point martingale difference law with zero
/// mean and unit second moment; level k holds the q^k atoms of F_{k-1}.
/// Node indices encode the digit string of the noise history, earliest step
/// in the most significant digit, so child j of (k, i) is (k+1, i*q + j).
class TreeTopology {
  public:
    /// Smallest valid tree: one Rademacher step.
    TreeTopology() : TreeTopology(1, (Vec(2) << 1.0, -1.0).finished(),
                                  (Vec(2) << 0.5, 0.5).finished()) {}
    TreeTopology(int horizon, Vec support, Vec prob);

    /// Two-point symmetric law w = (+1, -1), p = (1/2, 1/2).
    static TreeTopology rademacher(int horizon);

    int horizon() const { return horizon_; }
    int branching() const { return static_cast<int>(support_.size()); }
    double shock(int j) const { return support_(j); }
    double branch_prob(int j) const { return prob_(j); }
    const Vec& support() const { return support_; }
    const Vec& probabilities() const { return prob_; }

    std::int64_t level_size(int level) const;
    NodeId child(NodeId v, int j) const;
    NodeId parent(NodeId v) const;

    /// Unconditional probability of the atom: product of digit probabilities.
    double node_prob(NodeId v) const;

  private:
    int horizon_;
    Vec support_;
    Vec prob_;
    std::vector<std::int64_t> level_size_;
};

/// Time-indexed family of node fields; the value at time k is a d-vector per
/// level-k node (F_{k-1} measurability is enforced by the storage layout).
/// field(k) has shape d x q^k, one column per node.
class AdaptedProcess {
  public:
    AdaptedProcess() = default;
    AdaptedProcess(const TreeTopology& topology, int dim, int first_time, int last_time);

    int dim() const { return dim_; }
    int first_time() const { return first_time_; }
    int last_time() const { return first_time_ + static_cast<int>(fields_.size()) - 1; }

    Mat& field(int k);
    const Mat& field(int k) const;

    bool all_finite() const;

  private:
    int dim_ = 0;
    int first_time_ = 0;
    std::vector<Mat> fields_;
};

/// Result of conditioning a level-(k+1) field on F_{k-1}:
/// mean(v)     = E[Y_{k+1} | F_{k-1}](v)        (the y' field)
/// weighted(v) = E[Y_{k+1} w_k | F_{k-1}](v)    (the z' field)
struct CondPair {
    Mat mean;
    Mat weighted;
};

/// Exact one-step conditional expectations of a field living at `next_level`.
CondPair cond_prev(const Mat& field_next, int next_level, const TreeTopology& topology);

/// E[|field|^2] for a field at `level` (probability-weighted column norms).
double expectation_sq(const Mat& field, int level, const TreeTopology& topology);

/// E[<a, b>] for two fields at the same level.
double expectation_inner(const Mat& a, const Mat& b, int level, const TreeTopology& topology);

/// Squared solution-space norm: sum_k E[|x_k|^2] over the declared time range.
double n2_sq(const AdaptedProcess& p, const TreeTopology& topology);

enum class NormKind { N2, ScriptN2, H };

/// Squared norm dispatch for a single process. Only N2 applies here; the
/// triple and product-space norms live with PerturbationData.
double aggregate(const AdaptedProcess& p, NormKind kind, const TreeTopology& topology);

/// Deterministic test-data generator: i.i.d. standard normal entries per node.
AdaptedProcess random_adapted(const TreeTopology& topology, int dim, int first_time,
                              int last_time, std::uint64_t seed);

}  // namespace sdetree
