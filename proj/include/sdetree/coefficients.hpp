#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "sdetree/tree.hpp"

namespace sdetree {

/// Per-level container with broadcast semantics: either one item shared by
/// every node of the level, or one item per node.
template <class T>
class NodeIndexed {
  public:
    NodeIndexed() = default;
    explicit NodeIndexed(T uniform) { items_.push_back(std::move(uniform)); }
    explicit NodeIndexed(std::vector<T> per_node) : items_(std::move(per_node)) {}

    bool uniform() const { return items_.size() == 1; }
    std::size_t stored() const { return items_.size(); }

    const T& at(std::int64_t node) const {
        return items_[uniform() ? 0 : static_cast<std::size_t>(node)];
    }
    T& at(std::int64_t node) {
        return items_[uniform() ? 0 : static_cast<std::size_t>(node)];
    }

  private:
    std::vector<T> items_;
};

/// y -> a*y + c
struct AffineVecMap {
    Mat a;
    Vec c;
    Vec eval(const Vec& arg) const { return a * arg + c; }
};

/// (x, y', z') -> x_blk*x + yp_blk*y' + zp_blk*z' + c
struct AffineThetaMap {
    Mat x_blk, yp_blk, zp_blk;
    Vec c;
    Vec eval(const Vec& x, const Vec& yp, const Vec& zp) const {
        return x_blk * x + yp_blk * yp + zp_blk * zp + c;
    }
};

using ThetaHook = std::function<Vec(int k, NodeId v, const Vec& x, const Vec& yp, const Vec& zp)>;
using InitialHook = std::function<Vec(const Vec& y)>;
using TerminalHook = std::function<Vec(NodeId u, const Vec& x)>;

/// The coefficient system of a fully coupled FBSdE: the initial coupling map,
/// the terminal map (level-N node field), and the step maps (driver, drift,
/// diffusion), each affine blocks plus an optional nonlinear additive part.
/// Step maps at time k are indexed by level-k nodes (F_{k-1} measurability);
/// the initial map ignores the node; the terminal map uses level-N nodes.
class CoefficientSet {
  public:
    struct StepBlock {
        NodeIndexed<AffineThetaMap> driver;     // f
        NodeIndexed<AffineThetaMap> drift;      // b
        NodeIndexed<AffineThetaMap> diffusion;  // sigma
    };

    int state_dim = 0;
    AffineVecMap initial;                   // Lambda (deterministic)
    NodeIndexed<AffineVecMap> terminal;     // Phi per level-N node
    std::vector<StepBlock> steps;           // size N

    // Additive nonlinear parts, all scaled by hook_scale (alpha-blending
    // multiplies the scale, so blends of blends stay consistent).
    double hook_scale = 1.0;
    ThetaHook driver_hook, drift_hook, diffusion_hook;
    InitialHook initial_hook;
    TerminalHook terminal_hook;

    bool affine() const {
        return !driver_hook && !drift_hook && !diffusion_hook && !initial_hook && !terminal_hook;
    }

    Vec initial_map(const Vec& y) const;
    Vec terminal_map(NodeId u, const Vec& x) const;
    Vec driver(int k, NodeId v, const Vec& x, const Vec& yp, const Vec& zp) const;
    Vec drift(int k, NodeId v, const Vec& x, const Vec& yp, const Vec& zp) const;
    Vec diffusion(int k, NodeId v, const Vec& x, const Vec& yp, const Vec& zp) const;

    /// Zero affine system of dimension n over N steps.
    static CoefficientSet zero(const TreeTopology& topology, int n);
};

/// (mu, nu, M, G, A, B, C) of the domination-monotonicity conditions.
/// Exactly one of mu, nu is positive: mu > 0 selects Case 1 (initial-coupled
/// channel), nu > 0 selects Case 2 (terminal-coupled channel).
struct DominationData {
    double mu = 0.0;
    double nu = 0.0;
    Mat M;                       // mbar x n, weights the initial map channel
    NodeIndexed<Mat> G;          // level-N, mtil x n, weights the terminal channel
    struct StepMats {
        NodeIndexed<Mat> A, B, C;  // m x n
    };
    std::vector<StepMats> steps;  // size N

    bool case1() const { return mu > 0.0; }
    void validate() const;
};

/// The shorthand channel maps: P = A_k x and Q = B_k y' + C_k z'.
std::pair<Vec, Vec> pq_maps(const DominationData& dom, int k, NodeId v, const Vec& x,
                            const Vec& yp, const Vec& zp);

/// The alpha-blended coefficient family:
///   Phi^a    = a*Phi + (1-a) nu G^T G x
///   Lambda^a = a*Lambda - (1-a) mu M^T M y
///   f^a      = a*f - (1-a) nu A^T P
///   b^a      = a*b - (1-a) mu B^T Q
///   sigma^a  = a*sigma - (1-a) mu C^T Q
CoefficientSet blend_alpha(const CoefficientSet& coeffs, const DominationData& dom, double alpha);

/// Standard orientation is the monotone-decreasing coupling; Flipped is the
/// sign-symmetric variant.
enum class Orientation { Standard, Flipped };

struct InequalityStat {
    long checked = 0;
    long violations = 0;
    double worst_slack = 0.0;  // most negative slack seen (0 when everything passed)

    void record(double slack, double tolerance) {
        ++checked;
        if (slack < worst_slack) worst_slack = slack;
        if (slack < -tolerance) ++violations;
    }
};

/// Sampled verification of the domination and monotonicity inequalities plus
/// empirical Lipschitz constants (max difference quotients; not proofs).
struct ConditionReport {
    Orientation orientation = Orientation::Standard;
    // domination inequalities, one per constrained mapping
    InequalityStat dom_initial, dom_terminal, dom_driver, dom_drift, dom_diffusion;
    // monotonicity inequalities
    InequalityStat mono_initial, mono_terminal, mono_coupling;
    // empirical Lipschitz estimates
    double lip_initial = 0.0, lip_terminal = 0.0;
    double lip_driver = 0.0, lip_drift = 0.0, lip_diffusion = 0.0;

    long total_violations() const {
        return dom_initial.violations + dom_terminal.violations + dom_driver.violations +
               dom_drift.violations + dom_diffusion.violations + mono_initial.violations +
               mono_terminal.violations + mono_coupling.violations;
    }
    long monotonicity_violations() const {
        return mono_initial.violations + mono_terminal.violations + mono_coupling.violations;
    }
};

/// Samples pairs (theta, theta_bar) per time/node and records violations where
/// slack < -tolerance. pair_spread scales theta_bar - theta; zero makes every
/// pair degenerate (all slacks exactly zero).
ConditionReport check_conditions(const CoefficientSet& coeffs, const DominationData& dom,
                                 const TreeTopology& topology, long sample_count,
                                 std::uint64_t seed, double tolerance,
                                 Orientation orientation = Orientation::Standard,
                                 double pair_spread = 1.0);

struct MonotoneFamily {
    CoefficientSet coefficients;
    DominationData domination;
    double gain_bound = 0.0;  // largest nonlinearity gain the construction certifies
};

/// Builds an instance satisfying the domination-monotonicity conditions by
/// construction: negative-monotone linear core, affine drift, and a saturating
/// componentwise nonlinearity scaled by `gain`. Verified with check_conditions
/// before returning. case_selector is 1 (mu > 0) or 2 (nu > 0).
MonotoneFamily make_monotone_family(const TreeTopology& topology, int state_dim, int channel_dim,
                                    double gain, std::uint64_t seed, int case_selector);

/// Global sign change (-Lambda, -Phi, -Gamma): maps a Standard-oriented
/// instance onto a Flipped-oriented one and vice versa.
CoefficientSet negated(const CoefficientSet& coeffs);

/// Change of variables y -> -y that carries a Flipped-oriented instance to a
/// Standard-oriented one; solve the result, then negate the backward component
/// of the solution to recover the original system's solution.
CoefficientSet flip_orientation(const CoefficientSet& coeffs);

}  // namespace sdetree
