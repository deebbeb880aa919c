#pragma once

#include <functional>

#include "sdetree/tree.hpp"

namespace sdetree {

/// Forward equation x_{k+1} = b(k, x_k) + sigma(k, x_k) w_k with x_0 = eta.
/// Coefficients at step k are functions of the level-k node (F_{k-1}
/// measurable) and the current state.
struct SdeProblem {
    TreeTopology topology;
    int dim = 0;
    Vec initial;  // eta
    std::function<Vec(int k, NodeId v, const Vec& x)> drift;      // b
    std::function<Vec(int k, NodeId v, const Vec& x)> diffusion;  // sigma
};

/// Exact forward recursion over the tree, no iteration.
AdaptedProcess solve_sde(const SdeProblem& problem);

struct StabilityRecord {
    double lhs = 0.0;
    double rhs = 0.0;
    double ratio = 0.0;
    bool ratio_defined = true;  // false flags lhs > 0 with rhs = 0
};

/// Empirical sides of the stability estimates: `difference` compares the two
/// problems (data-difference bound evaluated along the second solution);
/// `zero_data` is the variant bounding the first solution by its own data.
struct SdeStabilityReport {
    StabilityRecord difference;
    StabilityRecord zero_data;
};

SdeStabilityReport sde_stability_report(const SdeProblem& problem, const SdeProblem& problem_bar);

}  // namespace sdetree
