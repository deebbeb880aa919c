#pragma once

#include <vector>

#include "sdetree/bsde.hpp"
#include "sdetree/continuation.hpp"

namespace sdetree {

/// A control is an adapted process with values in R^m; u_k lives on level-k
/// nodes.
using ControlProcess = AdaptedProcess;

/// Data of the forward LQ problem: controlled linear forward equation
///   x_{k+1} = A x + B u + b + (C x + D u + sigma) w
/// with the quadratic criterion weighted by M (initial), G (terminal),
/// Q (state) and R (control).
struct ForwardLqData {
    TreeTopology topology;
    int n = 0, m = 0;
    std::vector<NodeIndexed<Mat>> A, B, C, D;      // n x n, n x m, n x n, n x m per step
    std::vector<NodeIndexed<Vec>> b0, sigma0;      // offsets per step
    Mat M;                                         // symmetric positive definite
    NodeIndexed<Mat> G;                            // level-N field, nonnegative definite
    std::vector<NodeIndexed<Mat>> Q;               // nonnegative definite per step
    std::vector<NodeIndexed<Mat>> R;               // R - r_floor I nonnegative definite
    double r_floor = 1e-6;

    void validate() const;
};

/// Data of the backward LQ problem: controlled linear backward equation
///   y_k = A y' + B z' + C v + alpha,  y_N = eta
/// with criterion weighted by M (initial value), Q (y'), L (z'), R (control).
struct BackwardLqData {
    TreeTopology topology;
    int n = 0, m = 0;
    std::vector<NodeIndexed<Mat>> A, B, C;  // n x n, n x n, n x m per step
    std::vector<NodeIndexed<Vec>> alpha0;   // offsets per step
    Mat eta;                                // terminal field, n x q^N
    Mat M;                                  // symmetric positive definite
    std::vector<NodeIndexed<Mat>> Q, L;     // nonnegative definite per step
    std::vector<NodeIndexed<Mat>> R;
    double r_floor = 1e-6;

    void validate() const;
};

struct LqAssembly {
    CoefficientSet coefficients;
    DominationData domination;
    ConditionReport report;
};

/// Hamiltonian system of the forward LQ problem as a coefficient set, with
/// the control already substituted by its stationarity expression, plus the
/// domination data certifying the monotonicity conditions (mu = 1, initial
/// channel weighted by the principal square root of M^{-1}, coupling channel
/// by the R^{-1/2} weighted input blocks).
LqAssembly assemble_flq(const ForwardLqData& data);

struct FlqSolution {
    Vec xi;             // optimal initial state
    ControlProcess u;   // optimal control
    AdaptedProcess x, y;
    double cost = 0.0;
    double stationarity = 0.0;  // worst node-wise defect of the first-order condition
    SolveDiagnostics diagnostics;
};

/// Solves the Hamiltonian system (continuation solver cross-checked against
/// the stacked direct solve) and extracts the optimal pair.
FlqSolution solve_flq(const ForwardLqData& data, const ContinuationOptions& options);

/// Criterion value for a given initial state and admissible control.
double cost_flq(const ForwardLqData& data, const Vec& xi, const ControlProcess& u);

struct FlqOracle {
    Vec xi;
    ControlProcess u;
    double cost = 0.0;
    double gradient_norm = 0.0;
};

/// Brute-force optimality oracle: the criterion is an explicit convex
/// quadratic in the stacked decision vector (xi, all node values of u);
/// assemble its normal equations exactly and solve. Decisions are stacked
/// level-major in node order, xi first.
FlqOracle oracle_flq(const ForwardLqData& data);

LqAssembly assemble_blq(const BackwardLqData& data);

struct BlqSolution {
    ControlProcess v;
    AdaptedProcess x, y;
    double cost = 0.0;
    double stationarity = 0.0;
    SolveDiagnostics diagnostics;
};

BlqSolution solve_blq(const BackwardLqData& data, const ContinuationOptions& options);

double cost_blq(const BackwardLqData& data, const ControlProcess& v);

struct BlqOracle {
    ControlProcess v;
    double cost = 0.0;
    double gradient_norm = 0.0;
};

BlqOracle oracle_blq(const BackwardLqData& data);

/// Asset-liability demo: wealth recursion under a given investment process
/// and the liability valuation recursion conditioned on F_k (the valuation at
/// time k therefore lives on level min(k+1, N) nodes).
struct InsuranceParams {
    std::vector<double> rate;       // r_k, risk-free rate
    std::vector<double> premium;    // rho_k, risk premium
    std::vector<double> vol;        // sigma_k > 0
    std::vector<double> growth;     // lambda_k, liability growth rate
    std::vector<double> payout;     // c_k, payout ratio
    double initial_wealth = 0.0;    // m_0
};

struct InsurancePath {
    AdaptedProcess wealth;       // x over 0..N on level-k nodes
    std::vector<Mat> liability;  // y_k as 1 x q^liability_level(k)
    double residual = 0.0;

    static int liability_level(int k, int horizon) { return k + 1 < horizon ? k + 1 : horizon; }
};

InsurancePath insurance_demo(const TreeTopology& topology, const InsuranceParams& params,
                             const ControlProcess& u);

}  // namespace sdetree
