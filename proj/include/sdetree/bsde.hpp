#pragma once

#include <functional>

#include "sdetree/sde.hpp"
#include "sdetree/tree.hpp"

namespace sdetree {

/// Backward equation y_k = f(k+1, y'_{k+1}, z'_{k+1}) with y_N = xi, where
/// y'_{k+1} = E[y_{k+1} | F_{k-1}] and z'_{k+1} = E[y_{k+1} w_k | F_{k-1}].
/// The driver at step k is a function of the level-k node. This module keeps
/// the plus-sign convention of the standalone equation; coupled systems pass
/// drivers pre-negated.
struct BsdeProblem {
    TreeTopology topology;
    int dim = 0;
    Mat terminal;  // xi: dim x q^N field on level-N nodes
    std::function<Vec(int k, NodeId v, const Vec& yp, const Vec& zp)> driver;  // f(k+1, .)
};

/// Single exact backward sweep. z is never stored: (y', z') are recomputed
/// from y at level k+1 on demand.
AdaptedProcess solve_bsde(const BsdeProblem& problem);

struct BsdeStabilityReport {
    StabilityRecord difference;
    StabilityRecord zero_data;
};

BsdeStabilityReport bsde_stability_report(const BsdeProblem& problem,
                                          const BsdeProblem& problem_bar);

}  // namespace sdetree
