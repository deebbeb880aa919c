#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "sdetree/coefficients.hpp"
#include "sdetree/tree.hpp"

namespace sdetree {

/// The inhomogeneity (xi, eta, rho = (phi, psi, gamma)) of the parameterized
/// family: xi shifts the initial coupling, eta the terminal field, phi the
/// backward equation, psi the drift and gamma the diffusion.
struct PerturbationData {
    Vec xi;                          // R^n
    Mat eta;                         // n x q^N level-N field
    AdaptedProcess phi, psi, gamma;  // over k = 0..N-1

    static PerturbationData zero(const TreeTopology& topology, int n);
    static PerturbationData random(const TreeTopology& topology, int n, std::uint64_t seed,
                                   double scale = 1.0);
};

/// Squared norm dispatch: ScriptN2 sums the three process components, H adds
/// |xi|^2 and E|eta|^2 on top.
double aggregate(const PerturbationData& p, NormKind kind, const TreeTopology& topology);

struct SolutionPair {
    AdaptedProcess x, y;  // both over 0..N, dimension n
};

/// N2 norm of the pair (squared): sum_k E|x_k|^2 + sum_k E|y_k|^2.
double pair_n2_sq(const SolutionPair& s, const TreeTopology& topology);
double pair_diff_n2_sq(const SolutionPair& a, const SolutionPair& b, const TreeTopology& topology);

struct ContinuationOptions {
    double tolerance = 1e-10;      // relative N2 change between Picard iterates
    int max_iterations = 200;      // per-level Picard budget
    double delta_init = 0.5;       // first ladder step when flat_first is off
    double delta_min = 1e-3;       // halving below this fails the solve
    bool flat_first = true;        // try one level with delta = alpha_target first
    int max_depth = 10;            // bound on accepted ladder length
    long max_base_solves = 500000;  // bound on decoupled solves (nested-cost guard)

    void validate() const;
};

struct LevelDiagnostics {
    double alpha = 0.0;        // level reached
    double step = 0.0;         // delta used to reach it
    int iterations = 0;        // Picard iterations of the accepting loop
    double contraction = 0.0;  // max ratio of successive difference norms
};

struct SolveDiagnostics {
    std::vector<double> alpha_grid;       // accepted levels, starting at 0
    std::vector<LevelDiagnostics> levels;  // one entry per accepted advance
    double residual = 0.0;
    double wall_seconds = 0.0;
    long base_solves = 0;  // number of decoupled alpha = 0 solves performed
};

struct ConvergenceError : std::runtime_error {
    ConvergenceError(const std::string& msg, SolveDiagnostics diag)
        : std::runtime_error(msg), diagnostics(std::move(diag)) {}
    SolveDiagnostics diagnostics;
};

struct ResourceError : std::runtime_error {
    ResourceError(const std::string& msg, SolveDiagnostics diag)
        : std::runtime_error(msg), diagnostics(std::move(diag)) {}
    SolveDiagnostics diagnostics;
};

/// Direct solve of the decoupled alpha = 0 system. Case 1 solves the backward
/// part first (y_k = -phi_k, y_N = eta) and feeds it into the forward
/// recursion; Case 2 runs the forward part first (x_{k+1} = psi + gamma w)
/// and reads the backward part off it.
SolutionPair solve_alpha0(const CoefficientSet& coeffs, const DominationData& dom,
                          const PerturbationData& pert, const TreeTopology& topology);

/// The shifted inhomogeneity of the contraction map: the input perturbation
/// plus delta times the coefficient terms evaluated along the guess.
PerturbationData tilde_perturbation(const CoefficientSet& coeffs, const DominationData& dom,
                                    double delta, const PerturbationData& pert,
                                    const SolutionPair& guess, const TreeTopology& topology);

/// Node-wise defects of the parameterized system for a candidate pair. Pass
/// the alpha-blended coefficient set to check a blended level.
struct ResidualRecord {
    double forward = 0.0;
    double backward = 0.0;
    double initial = 0.0;
    double terminal = 0.0;
    double overall = 0.0;
};

ResidualRecord residual(const CoefficientSet& coeffs, const PerturbationData& pert,
                        const SolutionPair& candidate, const TreeTopology& topology);

struct ContinuationResult {
    SolutionPair solution;
    SolveDiagnostics diagnostics;
};

/// Continuation solve of the alpha_target instance: adaptive ladder from the
/// decoupled solve at alpha = 0, Picard iteration with warm starts at each
/// level, step halving on non-convergence. Throws ConvergenceError when the
/// step underflows delta_min and ResourceError when the ladder exceeds
/// max_depth. An optional warm start seeds the first advance.
ContinuationResult solve_fbsde(const CoefficientSet& coeffs, const DominationData& dom,
                               const PerturbationData& pert, double alpha_target,
                               const ContinuationOptions& options, const TreeTopology& topology,
                               const SolutionPair* warm_start = nullptr);

/// Oracle for affine systems: stacks every node unknown of (x, y) into one
/// linear system (forward rows per child, backward rows per node, initial and
/// terminal rows) and solves it by dense LU. Method-independent of the
/// continuation path.
SolutionPair solve_linear_direct(const CoefficientSet& coeffs, const PerturbationData& pert,
                                 const TreeTopology& topology);

/// Solution-difference norm against the coefficient-difference data term
/// evaluated along the barred solution, plus the telescoping duality defect.
struct AprioriReport {
    double lhs = 0.0;
    double rhs = 0.0;
    double ratio = 0.0;
    bool ratio_defined = true;
    double duality_defect = 0.0;
};

AprioriReport apriori_report(const CoefficientSet& coeffs, const CoefficientSet& coeffs_bar,
                             const SolutionPair& sol, const SolutionPair& sol_bar,
                             const TreeTopology& topology);

/// Same shape with the perturbation-difference data term.
AprioriReport perturbation_apriori(const PerturbationData& pert, const PerturbationData& pert_bar,
                                   const SolutionPair& sol, const SolutionPair& sol_bar,
                                   const TreeTopology& topology);

/// Both sides of the monotonicity balance inequality for two solves of the
/// same coefficients under different perturbations: the weighted channel
/// energies on the left, the perturbation pairings on the right. slack =
/// rhs - lhs is nonnegative up to solve accuracy.
struct MonotoneBalance {
    double lhs = 0.0;
    double rhs = 0.0;
    double slack = 0.0;
};

MonotoneBalance monotonicity_balance(const DominationData& dom, const PerturbationData& pert,
                                     const PerturbationData& pert_bar, const SolutionPair& sol,
                                     const SolutionPair& sol_bar, const TreeTopology& topology);

/// Perturbation counterpart of the y -> -y orientation change.
PerturbationData flip_orientation(const PerturbationData& pert);

/// Negates the backward component in place; applied to the solution of a
/// flipped system to recover the original one.
SolutionPair unflip_solution(SolutionPair s);

}  // namespace sdetree
