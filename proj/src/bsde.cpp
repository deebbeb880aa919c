#include "sdetree/bsde.hpp"

#include <limits>
#include <string>

namespace sdetree {

namespace {

void check_problem(const BsdeProblem& p) {
    if (p.dim < 1) throw UsageError("bsde problem dimension must be >= 1");
    if (p.terminal.rows() != p.dim || p.terminal.cols() != p.topology.level_size(p.topology.horizon()))
        throw ShapeError("terminal field has wrong shape");
    if (!p.terminal.allFinite()) throw NumericError("terminal field is not finite");
    if (!p.driver) throw UsageError("bsde problem needs a driver");
}

StabilityRecord make_record(double lhs, double rhs) {
    StabilityRecord r;
    r.lhs = lhs;
    r.rhs = rhs;
    if (rhs > 0.0) {
        r.ratio = lhs / rhs;
    } else if (lhs > 0.0) {
        r.ratio = std::numeric_limits<double>::infinity();
        r.ratio_defined = false;
    } else {
        r.ratio = 0.0;
    }
    return r;
}

}  // namespace

AdaptedProcess solve_bsde(const BsdeProblem& problem) {
    check_problem(problem);
    const TreeTopology& topo = problem.topology;
    const int N = topo.horizon();

    AdaptedProcess y(topo, problem.dim, 0, N);
    y.field(N) = problem.terminal;
    for (int k = N - 1; k >= 0; --k) {
        const CondPair cp = cond_prev(y.field(k + 1), k + 1, topo);
        Mat& cur = y.field(k);
        for (std::int64_t v = 0; v < cur.cols(); ++v) {
            const Vec val = problem.driver(k, NodeId{k, v}, cp.mean.col(v), cp.weighted.col(v));
            if (!val.allFinite())
                throw NumericError("non-finite driver output at step " + std::to_string(k) +
                                   ", node " + std::to_string(v));
            cur.col(v) = val;
        }
    }
    return y;
}

BsdeStabilityReport bsde_stability_report(const BsdeProblem& problem,
                                          const BsdeProblem& problem_bar) {
    if (problem.topology.horizon() != problem_bar.topology.horizon() ||
        problem.topology.branching() != problem_bar.topology.branching())
        throw ShapeError("stability report needs both problems on the same topology");
    if (problem.dim != problem_bar.dim) throw ShapeError("stability report dimension mismatch");

    const TreeTopology& topo = problem.topology;
    const int N = topo.horizon();
    const AdaptedProcess y = solve_bsde(problem);
    const AdaptedProcess yb = solve_bsde(problem_bar);

    double lhs = 0.0;
    for (int k = 0; k <= N; ++k)
        lhs += expectation_sq(y.field(k) - yb.field(k), k, topo);

    // driver difference along the barred conditioned pair
    double rhs = expectation_sq(problem.terminal - problem_bar.terminal, N, topo);
    for (int k = 0; k < N; ++k) {
        const CondPair cp = cond_prev(yb.field(k + 1), k + 1, topo);
        Mat df(problem.dim, topo.level_size(k));
        for (std::int64_t v = 0; v < df.cols(); ++v) {
            const NodeId node{k, v};
            df.col(v) = problem.driver(k, node, cp.mean.col(v), cp.weighted.col(v)) -
                        problem_bar.driver(k, node, cp.mean.col(v), cp.weighted.col(v));
        }
        rhs += expectation_sq(df, k, topo);
    }

    double lhs0 = 0.0;
    for (int k = 0; k <= N; ++k) lhs0 += expectation_sq(y.field(k), k, topo);
    double rhs0 = expectation_sq(problem.terminal, N, topo);
    const Vec zero = Vec::Zero(problem.dim);
    for (int k = 0; k < N; ++k) {
        Mat f0(problem.dim, topo.level_size(k));
        for (std::int64_t v = 0; v < f0.cols(); ++v)
            f0.col(v) = problem.driver(k, NodeId{k, v}, zero, zero);
        rhs0 += expectation_sq(f0, k, topo);
    }

    BsdeStabilityReport rep;
    rep.difference = make_record(lhs, rhs);
    rep.zero_data = make_record(lhs0, rhs0);
    return rep;
}

}  // namespace sdetree
