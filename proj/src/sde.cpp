#include "sdetree/sde.hpp"

#include <cmath>
#include <string>

namespace sdetree {

namespace {

void check_problem(const SdeProblem& p) {
    if (p.dim < 1) throw UsageError("sde problem dimension must be >= 1");
    if (p.initial.size() != p.dim) throw ShapeError("initial state has wrong dimension");
    if (!p.initial.allFinite()) throw NumericError("initial state is not finite");
    if (!p.drift || !p.diffusion) throw UsageError("sde problem needs drift and diffusion");
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

AdaptedProcess solve_sde(const SdeProblem& problem) {
    check_problem(problem);
    const TreeTopology& topo = problem.topology;
    const int N = topo.horizon();
    const int q = topo.branching();

    AdaptedProcess x(topo, problem.dim, 0, N);
    x.field(0).col(0) = problem.initial;
    for (int k = 0; k < N; ++k) {
        const Mat& cur = x.field(k);
        Mat& nxt = x.field(k + 1);
        for (std::int64_t v = 0; v < cur.cols(); ++v) {
            const NodeId node{k, v};
            const Vec b = problem.drift(k, node, cur.col(v));
            const Vec s = problem.diffusion(k, node, cur.col(v));
            if (!b.allFinite() || !s.allFinite())
                throw NumericError("non-finite coefficient at step " + std::to_string(k) +
                                   ", node " + std::to_string(v));
            for (int j = 0; j < q; ++j) nxt.col(v * q + j) = b + topo.shock(j) * s;
        }
    }
    return x;
}

SdeStabilityReport sde_stability_report(const SdeProblem& problem,
                                        const SdeProblem& problem_bar) {
    if (problem.topology.horizon() != problem_bar.topology.horizon() ||
        problem.topology.branching() != problem_bar.topology.branching())
        throw ShapeError("stability report needs both problems on the same topology");
    if (problem.dim != problem_bar.dim) throw ShapeError("stability report dimension mismatch");

    const TreeTopology& topo = problem.topology;
    const int N = topo.horizon();
    const AdaptedProcess x = solve_sde(problem);
    const AdaptedProcess xb = solve_sde(problem_bar);

    double lhs = 0.0;
    for (int k = 0; k <= N; ++k)
        lhs += expectation_sq(x.field(k) - xb.field(k), k, topo);

    // data-difference term evaluated along the barred solution
    double rhs = (problem.initial - problem_bar.initial).squaredNorm();
    for (int k = 0; k < N; ++k) {
        const Mat& cur = xb.field(k);
        Mat db(problem.dim, cur.cols()), ds(problem.dim, cur.cols());
        for (std::int64_t v = 0; v < cur.cols(); ++v) {
            const NodeId node{k, v};
            db.col(v) = problem.drift(k, node, cur.col(v)) - problem_bar.drift(k, node, cur.col(v));
            ds.col(v) = problem.diffusion(k, node, cur.col(v)) -
                        problem_bar.diffusion(k, node, cur.col(v));
        }
        rhs += expectation_sq(db, k, topo) + expectation_sq(ds, k, topo);
    }

    // zero-comparison variant: the first solution against its own data
    double lhs0 = 0.0;
    for (int k = 0; k <= N; ++k) lhs0 += expectation_sq(x.field(k), k, topo);
    double rhs0 = problem.initial.squaredNorm();
    const Vec zero = Vec::Zero(problem.dim);
    for (int k = 0; k < N; ++k) {
        Mat b0(problem.dim, topo.level_size(k)), s0(problem.dim, topo.level_size(k));
        for (std::int64_t v = 0; v < b0.cols(); ++v) {
            const NodeId node{k, v};
            b0.col(v) = problem.drift(k, node, zero);
            s0.col(v) = problem.diffusion(k, node, zero);
        }
        rhs0 += expectation_sq(b0, k, topo) + expectation_sq(s0, k, topo);
    }

    SdeStabilityReport rep;
    rep.difference = make_record(lhs, rhs);
    rep.zero_data = make_record(lhs0, rhs0);
    return rep;
}

}  // namespace sdetree
