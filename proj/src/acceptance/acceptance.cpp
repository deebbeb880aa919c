#include "acceptance/acceptance.hpp"

#include <cmath>
#include <cstdio>
#include <functional>

#include "sdetree/bsde.hpp"
#include "sdetree/continuation.hpp"
#include "sdetree/lq.hpp"
#include "sdetree/rng.hpp"
#include "sdetree/sde.hpp"

namespace sdetree::acceptance {

namespace {

using namespace sdetree;

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
    char buf[160];
    std::snprintf(buf, sizeof buf, pattern, a, b, c);
    return std::string(buf);
}

// ---------------------------------------------------------------------------
// independent oracles (kept free of the solver paths they check)

// E[xi | F_{k-1}](v): probability-weighted average of the terminal field over
// the level-N descendants of the level-k node v, by direct path enumeration
Vec descendant_average(const TreeTopology& topo, const Mat& xi, int k, std::int64_t v) {
    const int N = topo.horizon();
    const int q = topo.branching();
    std::int64_t first = v, count = 1;
    for (int l = k; l < N; ++l) {
        first *= q;
        count *= q;
    }
    const double pv = topo.node_prob(NodeId{k, v});
    Vec acc = Vec::Zero(xi.rows());
    for (std::int64_t i = 0; i < count; ++i)
        acc += (topo.node_prob(NodeId{N, first + i}) / pv) * xi.col(first + i);
    return acc;
}

// liability value at time 0 on a level-1 node: the compounded payment sum
// conditioned by direct descendant enumeration
double insurance_y0_oracle(const TreeTopology& topo, const InsuranceParams& params,
                           const AdaptedProcess& wealth, std::int64_t v1) {
    const int N = topo.horizon();
    const int q = topo.branching();
    double total = 0.0;
    double factor = 1.0;
    const double pv = topo.node_prob(NodeId{1, v1});
    for (int j = 0; j < N; ++j) {
        double e = 0.0;
        if (j == 0) {
            e = wealth.field(0)(0, 0);
        } else {
            std::int64_t first = v1, count = 1;
            for (int l = 1; l < j; ++l) {
                first *= q;
                count *= q;
            }
            for (std::int64_t i = 0; i < count; ++i)
                e += (topo.node_prob(NodeId{j, first + i}) / pv) * wealth.field(j)(0, first + i);
        }
        total += factor * params.payout[static_cast<std::size_t>(j)] * e;
        factor *= 1.0 + params.growth[static_cast<std::size_t>(j)];
    }
    return -total;
}

// ---------------------------------------------------------------------------
// shared fixtures

Mat random_psd(Rng& rng, int n, double norm) {
    Mat x = rng.gauss_matrix(n, n);
    Mat s = x.transpose() * x;
    Eigen::SelfAdjointEigenSolver<Mat> es(s);
    const double top = es.eigenvalues().cwiseAbs().maxCoeff();
    return top > 0 ? Mat(s * (norm / top)) : Mat::Identity(n, n) * norm;
}

ForwardLqData random_flq(const TreeTopology& topo, int n, int m, std::uint64_t seed) {
    Rng rng(seed);
    const int N = topo.horizon();
    ForwardLqData d;
    d.topology = topo;
    d.n = n;
    d.m = m;
    for (int k = 0; k < N; ++k) {
        d.A.push_back(NodeIndexed<Mat>(Mat(0.45 * rng.gauss_matrix(n, n))));
        d.B.push_back(NodeIndexed<Mat>(Mat(0.40 * rng.gauss_matrix(n, m))));
        d.C.push_back(NodeIndexed<Mat>(Mat(0.30 * rng.gauss_matrix(n, n))));
        d.D.push_back(NodeIndexed<Mat>(Mat(0.30 * rng.gauss_matrix(n, m))));
        d.b0.push_back(NodeIndexed<Vec>(Vec(0.5 * rng.gauss_vector(n))));
        d.sigma0.push_back(NodeIndexed<Vec>(Vec(0.3 * rng.gauss_vector(n))));
        d.Q.push_back(NodeIndexed<Mat>(random_psd(rng, n, 0.4)));
        d.R.push_back(NodeIndexed<Mat>(Mat(Mat::Identity(m, m) * (0.6 + 0.4 * rng.uniform()))));
    }
    d.M = Mat::Identity(n, n) + random_psd(rng, n, 0.5);
    std::vector<Mat> gs;
    for (std::int64_t u = 0; u < topo.level_size(N); ++u) gs.push_back(random_psd(rng, n, 0.5));
    d.G = NodeIndexed<Mat>(std::move(gs));
    d.r_floor = 0.5;
    return d;
}

BackwardLqData random_blq(const TreeTopology& topo, int n, int m, std::uint64_t seed) {
    Rng rng(seed);
    const int N = topo.horizon();
    BackwardLqData d;
    d.topology = topo;
    d.n = n;
    d.m = m;
    for (int k = 0; k < N; ++k) {
        d.A.push_back(NodeIndexed<Mat>(Mat(0.45 * rng.gauss_matrix(n, n))));
        d.B.push_back(NodeIndexed<Mat>(Mat(0.35 * rng.gauss_matrix(n, n))));
        d.C.push_back(NodeIndexed<Mat>(Mat(0.50 * rng.gauss_matrix(n, m))));
        d.alpha0.push_back(NodeIndexed<Vec>(Vec(0.4 * rng.gauss_vector(n))));
        d.Q.push_back(NodeIndexed<Mat>(random_psd(rng, n, 0.4)));
        d.L.push_back(NodeIndexed<Mat>(random_psd(rng, n, 0.3)));
        d.R.push_back(NodeIndexed<Mat>(Mat(Mat::Identity(m, m) * (0.6 + 0.4 * rng.uniform()))));
    }
    d.eta = rng.gauss_matrix(n, topo.level_size(N));
    d.M = Mat::Identity(n, n) + random_psd(rng, n, 0.5);
    d.r_floor = 0.5;
    return d;
}

CoefficientSet inflate_coupling(const CoefficientSet& co, double s) {
    CoefficientSet out = co;
    for (auto& blk : out.steps) {
        for (std::size_t i = 0; i < blk.driver.stored(); ++i) {
            blk.driver.at(static_cast<std::int64_t>(i)).yp_blk *= s;
            blk.driver.at(static_cast<std::int64_t>(i)).zp_blk *= s;
        }
        for (std::size_t i = 0; i < blk.drift.stored(); ++i)
            blk.drift.at(static_cast<std::int64_t>(i)).x_blk *= s;
        for (std::size_t i = 0; i < blk.diffusion.stored(); ++i)
            blk.diffusion.at(static_cast<std::int64_t>(i)).x_blk *= s;
    }
    return out;
}

double control_diff(const AdaptedProcess& a, const AdaptedProcess& b, const TreeTopology& topo) {
    double acc = 0.0;
    for (int k = 0; k < topo.horizon(); ++k)
        acc += expectation_sq(a.field(k) - b.field(k), k, topo);
    return std::sqrt(acc);
}

// ---------------------------------------------------------------------------
// criteria

CriterionResult c1_oracle_equivalence(std::uint64_t seed) {
    const auto topo = TreeTopology::rademacher(5);
    ContinuationOptions opt;
    double max_rel = 0.0, max_res = 0.0;
    for (int i = 0; i < 20; ++i) {
        const int cs = 1 + i % 2;
        const auto fam = make_monotone_family(topo, 2, 1, 0.0, seed * 1000 + i, cs);
        const auto pert = PerturbationData::random(topo, 2, seed * 2000 + i, 1.0);
        const auto direct = solve_linear_direct(fam.coefficients, pert, topo);
        max_res = std::max(max_res, residual(fam.coefficients, pert, direct, topo).overall);
        const auto cont = solve_fbsde(fam.coefficients, fam.domination, pert, 1.0, opt, topo);
        const double rel = std::sqrt(pair_diff_n2_sq(cont.solution, direct, topo)) /
                           std::max(1.0, std::sqrt(pair_n2_sq(direct, topo)));
        max_rel = std::max(max_rel, rel);
    }
    return {1, "oracle-equivalence-linear", max_rel <= 1e-8 && max_res <= 1e-11,
            fmt("max_rel_err=%.2e max_direct_residual=%.2e", max_rel, max_res)};
}

CriterionResult c2_uniqueness(std::uint64_t seed) {
    const auto topo = TreeTopology::rademacher(4);
    ContinuationOptions opt;
    double max_rel = 0.0;
    for (int i = 0; i < 4; ++i) {
        const int cs = 1 + i % 2;
        const auto fam = make_monotone_family(topo, 2, 1, 0.1, seed * 300 + i, cs);
        const auto pert = PerturbationData::random(topo, 2, seed * 400 + i, 1.0);
        const auto a = solve_fbsde(fam.coefficients, fam.domination, pert, 1.0, opt, topo);
        const SolutionPair wild{random_adapted(topo, 2, 0, 4, seed * 500 + i),
                                random_adapted(topo, 2, 0, 4, seed * 600 + i)};
        const auto b = solve_fbsde(fam.coefficients, fam.domination, pert, 1.0, opt, topo,
                                   &wild);
        const double rel = std::sqrt(pair_diff_n2_sq(a.solution, b.solution, topo)) /
                           std::max(1.0, std::sqrt(pair_n2_sq(a.solution, topo)));
        max_rel = std::max(max_rel, rel);
    }
    return {2, "uniqueness-warm-starts", max_rel <= 1e-8, fmt("max_rel_diff=%.2e", max_rel)};
}

CriterionResult c3_residual_contract(std::uint64_t seed) {
    const auto topo = TreeTopology::rademacher(5);
    ContinuationOptions opt;
    double worst = 0.0;
    bool ok = true;
    for (int i = 0; i < 6; ++i) {
        const int cs = 1 + i % 2;
        const double gain = i < 3 ? 0.0 : 0.1;
        const auto fam = make_monotone_family(topo, 2, 1, gain, seed * 70 + i, cs);
        const auto pert = PerturbationData::random(topo, 2, seed * 80 + i, 1.0);
        const auto res = solve_fbsde(fam.coefficients, fam.domination, pert, 1.0, opt, topo);
        const double bound =
            10.0 * opt.tolerance * (1.0 + std::sqrt(pair_n2_sq(res.solution, topo)));
        worst = std::max(worst, res.diagnostics.residual / bound);
        ok = ok && res.diagnostics.residual <= bound;
    }
    return {3, "residual-contract", ok, fmt("worst_residual_over_bound=%.3f", worst)};
}

CriterionResult c4_monotonicity_sampling(std::uint64_t seed) {
    const auto topo = TreeTopology::rademacher(3);
    long standard_bad = 0, flipped_bad = 0;
    for (int cs : {1, 2}) {
        const auto fam = make_monotone_family(topo, 2, 1, 0.1, seed * 40 + cs, cs);
        const auto rep = check_conditions(fam.coefficients, fam.domination, topo, 10000,
                                          seed + 7, 1e-12);
        standard_bad += rep.monotonicity_violations();
        const auto flipped = check_conditions(negated(fam.coefficients), fam.domination, topo,
                                              10000, seed + 8, 1e-12, Orientation::Flipped);
        flipped_bad += flipped.monotonicity_violations();
    }
    return {4, "monotonicity-sampling", standard_bad == 0 && flipped_bad == 0,
            fmt("violations_standard=%.0f violations_flipped=%.0f",
                static_cast<double>(standard_bad), static_cast<double>(flipped_bad))};
}

CriterionResult c5_duality_balance(std::uint64_t seed) {
    const auto topo = TreeTopology::rademacher(4);
    double worst_defect = 0.0, worst_slack = 0.0;
    for (int i = 0; i < 20; ++i) {
        const int cs = 1 + i % 2;
        const auto fam = make_monotone_family(topo, 2, 1, 0.0, seed * 50 + i, cs);
        const auto pa = PerturbationData::random(topo, 2, seed * 51 + i, 1.0);
        const auto pb = PerturbationData::random(topo, 2, seed * 52 + i, 1.0);
        const auto sa = solve_linear_direct(fam.coefficients, pa, topo);
        const auto sb = solve_linear_direct(fam.coefficients, pb, topo);
        const auto rep = perturbation_apriori(pa, pb, sa, sb, topo);
        worst_defect = std::max(worst_defect, rep.duality_defect);
        const auto bal = monotonicity_balance(fam.domination, pa, pb, sa, sb, topo);
        worst_slack = std::min(worst_slack, bal.slack);
    }
    return {5, "duality-and-balance", worst_defect <= 1e-12 && worst_slack >= -1e-10,
            fmt("max_duality_defect=%.2e min_balance_slack=%.2e", worst_defect, worst_slack)};
}

CriterionResult c6_estimate_homogeneity(std::uint64_t seed) {
    const auto topo = TreeTopology::rademacher(4);
    Rng rng(seed * 90 + 1);
    double worst_rel = 0.0;
    bool zero_ok = true;

    {  // forward equation: offset and initial-state differences scaled
        const Mat a = 0.4 * rng.gauss_matrix(2, 2);
        const Mat s = 0.2 * rng.gauss_matrix(2, 2);
        const Vec bc = rng.gauss_vector(2), sc = rng.gauss_vector(2);
        const Vec db = rng.gauss_vector(2), de = rng.gauss_vector(2);
        auto make = [&](double scale) {
            SdeProblem p;
            p.topology = topo;
            p.dim = 2;
            p.initial = Vec::Ones(2) + scale * de;
            const Vec bshift = bc + scale * db;
            p.drift = [a, bshift](int, NodeId, const Vec& x) -> Vec { return a * x + bshift; };
            p.diffusion = [s, sc](int, NodeId, const Vec& x) -> Vec { return s * x + sc; };
            return p;
        };
        const auto base = make(0.0);
        const auto same = sde_stability_report(base, base);
        zero_ok = zero_ok && same.difference.lhs == 0.0;
        double first = 0.0;
        for (double scale : {1.0, 0.5, 0.25}) {
            const auto rep = sde_stability_report(make(scale), base);
            if (scale == 1.0) first = rep.difference.ratio;
            else worst_rel = std::max(worst_rel,
                                      std::abs(rep.difference.ratio - first) / first);
        }
    }

    {  // backward equation: terminal and driver-offset differences scaled
        const Mat ay = 0.45 * rng.gauss_matrix(2, 2);
        const Mat az = 0.25 * rng.gauss_matrix(2, 2);
        const Vec c0 = rng.gauss_vector(2), dc = rng.gauss_vector(2);
        const Mat term = rng.gauss_matrix(2, topo.level_size(4));
        const Mat dterm = rng.gauss_matrix(2, topo.level_size(4));
        auto make = [&](double scale) {
            BsdeProblem p;
            p.topology = topo;
            p.dim = 2;
            p.terminal = term + scale * dterm;
            const Vec shift = c0 + scale * dc;
            p.driver = [ay, az, shift](int, NodeId, const Vec& yp, const Vec& zp) -> Vec {
                return ay * yp + az * zp + shift;
            };
            return p;
        };
        const auto base = make(0.0);
        const auto same = bsde_stability_report(base, base);
        zero_ok = zero_ok && same.difference.lhs == 0.0;
        double first = 0.0;
        for (double scale : {1.0, 0.5, 0.25}) {
            const auto rep = bsde_stability_report(make(scale), base);
            if (scale == 1.0) first = rep.difference.ratio;
            else worst_rel = std::max(worst_rel,
                                      std::abs(rep.difference.ratio - first) / first);
        }
    }

    {  // coupled system, coefficient-difference route: scaled offset shifts
        const auto fam = make_monotone_family(topo, 2, 1, 0.0, seed * 90 + 2, 1);
        const auto pert = PerturbationData::random(topo, 2, seed * 90 + 3, 1.0);
        const auto sol_base = solve_linear_direct(fam.coefficients, pert, topo);
        const auto same =
            apriori_report(fam.coefficients, fam.coefficients, sol_base, sol_base, topo);
        zero_ok = zero_ok && same.lhs == 0.0 && same.rhs == 0.0;

        Rng drng(seed * 90 + 5);
        const Vec d_init = drng.gauss_vector(2);
        const Vec d_term = drng.gauss_vector(2);
        std::vector<Vec> d_f, d_b, d_s;
        for (int k = 0; k < 4; ++k) {
            d_f.push_back(drng.gauss_vector(2));
            d_b.push_back(drng.gauss_vector(2));
            d_s.push_back(drng.gauss_vector(2));
        }
        auto shifted_coeffs = [&](double scale) {
            CoefficientSet c = fam.coefficients;
            c.initial.c += scale * d_init;
            for (std::size_t u = 0; u < c.terminal.stored(); ++u)
                c.terminal.at(static_cast<std::int64_t>(u)).c += scale * d_term;
            for (int k = 0; k < 4; ++k) {
                auto& blk = c.steps[static_cast<std::size_t>(k)];
                const auto ks = static_cast<std::size_t>(k);
                for (std::size_t i = 0; i < blk.driver.stored(); ++i)
                    blk.driver.at(static_cast<std::int64_t>(i)).c += scale * d_f[ks];
                for (std::size_t i = 0; i < blk.drift.stored(); ++i)
                    blk.drift.at(static_cast<std::int64_t>(i)).c += scale * d_b[ks];
                for (std::size_t i = 0; i < blk.diffusion.stored(); ++i)
                    blk.diffusion.at(static_cast<std::int64_t>(i)).c += scale * d_s[ks];
            }
            return c;
        };
        double first = 0.0;
        for (double scale : {1.0, 0.5, 0.25}) {
            const CoefficientSet cs = shifted_coeffs(scale);
            const auto sol = solve_linear_direct(cs, pert, topo);
            const auto rep = apriori_report(cs, fam.coefficients, sol, sol_base, topo);
            if (scale == 1.0) first = rep.ratio;
            else worst_rel = std::max(worst_rel, std::abs(rep.ratio - first) / first);
        }
    }

    {  // coupled system, inhomogeneity route: scaled perturbation shifts
        const auto fam = make_monotone_family(topo, 2, 1, 0.0, seed * 90 + 6, 2);
        const auto base_pert = PerturbationData::random(topo, 2, seed * 90 + 7, 1.0);
        const auto dpert = PerturbationData::random(topo, 2, seed * 90 + 8, 1.0);
        const auto sol_base = solve_linear_direct(fam.coefficients, base_pert, topo);
        const auto same = perturbation_apriori(base_pert, base_pert, sol_base, sol_base, topo);
        zero_ok = zero_ok && same.lhs == 0.0;
        double first = 0.0;
        for (double scale : {1.0, 0.5, 0.25}) {
            PerturbationData shifted = base_pert;
            shifted.xi += scale * dpert.xi;
            shifted.eta += scale * dpert.eta;
            for (int k = 0; k < 4; ++k) {
                shifted.phi.field(k) += scale * dpert.phi.field(k);
                shifted.psi.field(k) += scale * dpert.psi.field(k);
                shifted.gamma.field(k) += scale * dpert.gamma.field(k);
            }
            const auto sol = solve_linear_direct(fam.coefficients, shifted, topo);
            const auto rep = perturbation_apriori(shifted, base_pert, sol, sol_base, topo);
            if (scale == 1.0) first = rep.ratio;
            else worst_rel = std::max(worst_rel, std::abs(rep.ratio - first) / first);
        }
    }

    return {6, "estimate-homogeneity", worst_rel <= 1e-9 && zero_ok,
            fmt("worst_ratio_drift=%.2e zero_lhs_exact=%.0f", worst_rel,
                zero_ok ? 1.0 : 0.0)};
}

CriterionResult c7_flq_hand_instance(std::uint64_t) {
    ForwardLqData d;
    d.topology = TreeTopology::rademacher(1);
    d.n = d.m = 1;
    d.A = {NodeIndexed<Mat>(Mat::Ones(1, 1))};
    d.B = {NodeIndexed<Mat>(Mat::Ones(1, 1))};
    d.C = {NodeIndexed<Mat>(Mat::Zero(1, 1))};
    d.D = {NodeIndexed<Mat>(Mat::Zero(1, 1))};
    d.b0 = {NodeIndexed<Vec>(Vec::Ones(1))};
    d.sigma0 = {NodeIndexed<Vec>(Vec::Zero(1))};
    d.M = Mat::Ones(1, 1);
    d.G = NodeIndexed<Mat>(Mat::Ones(1, 1));
    d.Q = {NodeIndexed<Mat>(Mat::Zero(1, 1))};
    d.R = {NodeIndexed<Mat>(Mat::Ones(1, 1))};
    d.r_floor = 0.5;

    const auto oracle = oracle_flq(d);
    ContinuationOptions opt;
    const auto sol = solve_flq(d, opt);
    const double e1 = std::abs(sol.xi(0) - (-1.0 / 3.0));
    const double e2 = std::abs(sol.u.field(0)(0, 0) - (-1.0 / 3.0));
    const double e3 = std::abs(sol.cost - 1.0 / 6.0);
    const double eo = std::abs(oracle.cost - 1.0 / 6.0);
    const bool pass = e1 <= 1e-10 && e2 <= 1e-10 && e3 <= 1e-10 && eo <= 1e-10;
    return {7, "flq-hand-instance", pass,
            fmt("err_xi=%.2e err_u=%.2e err_cost=%.2e", e1, e2, e3)};
}

CriterionResult c8_lq_optimality(std::uint64_t seed) {
    const auto topo = TreeTopology::rademacher(4);
    ContinuationOptions opt;
    double max_ctrl = 0.0, min_gap = 0.0, max_stat = 0.0;
    for (int i = 0; i < 20; ++i) {
        const ForwardLqData d = random_flq(topo, 2, 1, seed * 20 + i);
        const auto sol = solve_flq(d, opt);
        const auto oracle = oracle_flq(d);
        max_ctrl = std::max(max_ctrl, control_diff(sol.u, oracle.u, topo));
        max_ctrl = std::max(max_ctrl, (sol.xi - oracle.xi).norm());
        max_stat = std::max(max_stat, sol.stationarity);
        for (int t = 0; t < 100; ++t) {
            Rng rng(seed * 7000 + i * 100 + t);
            const Vec xi = rng.gauss_vector(2);
            const ControlProcess cmp = random_adapted(topo, 1, 0, 3, seed * 9000 + i * 100 + t);
            min_gap = std::min(min_gap, cost_flq(d, xi, cmp) - sol.cost);
        }
    }
    for (int i = 0; i < 20; ++i) {
        const BackwardLqData d = random_blq(topo, 2, 1, seed * 30 + i);
        const auto sol = solve_blq(d, opt);
        const auto oracle = oracle_blq(d);
        max_ctrl = std::max(max_ctrl, control_diff(sol.v, oracle.v, topo));
        max_stat = std::max(max_stat, sol.stationarity);
        for (int t = 0; t < 100; ++t) {
            const ControlProcess cmp = random_adapted(topo, 1, 0, 3, seed * 11000 + i * 100 + t);
            min_gap = std::min(min_gap, cost_blq(d, cmp) - sol.cost);
        }
    }
    const bool pass = max_ctrl <= 1e-8 && min_gap >= -1e-10 && max_stat <= 1e-10;
    return {8, "lq-optimality", pass,
            fmt("max_ctrl_err=%.2e min_gap=%.2e max_stationarity=%.2e", max_ctrl, min_gap,
                max_stat)};
}

CriterionResult c9_bsde_martingale(std::uint64_t seed) {
    const auto topo = TreeTopology::rademacher(5);
    const int N = 5;
    Rng rng(seed * 60 + 5);
    BsdeProblem p;
    p.topology = topo;
    p.dim = 2;
    p.terminal = rng.gauss_matrix(2, topo.level_size(N));
    p.driver = [](int, NodeId, const Vec& yp, const Vec&) -> Vec { return yp; };
    const AdaptedProcess y = solve_bsde(p);
    double worst = 0.0;
    for (int k = 0; k < N; ++k)
        for (std::int64_t v = 0; v < topo.level_size(k); ++v)
            worst = std::max(worst, (y.field(k).col(v) -
                                     descendant_average(topo, p.terminal, k, v))
                                        .cwiseAbs()
                                        .maxCoeff());
    return {9, "bsde-martingale", worst <= 1e-14, fmt("max_error=%.2e", worst)};
}

CriterionResult c10_insurance(std::uint64_t seed) {
    const int N = 5;
    const auto topo = TreeTopology::rademacher(N);
    InsuranceParams params;
    params.rate = {0.02, 0.015, 0.025, 0.02, 0.01};
    params.premium = {0.03, 0.04, 0.035, 0.03, 0.045};
    params.vol = {0.15, 0.2, 0.18, 0.22, 0.17};
    params.growth = {0.01, 0.02, 0.015, 0.01, 0.02};
    params.payout = {0.05, 0.06, 0.05, 0.07, 0.06};
    params.initial_wealth = 1.0;
    const ControlProcess u = random_adapted(topo, 1, 0, N - 1, seed * 2 + 1);

    const auto path = insurance_demo(topo, params, u);
    double worst = 0.0;
    for (std::int64_t v = 0; v < topo.level_size(1); ++v)
        worst = std::max(worst, std::abs(path.liability[0](0, v) -
                                         insurance_y0_oracle(topo, params, path.wealth, v)));
    const bool pass = path.residual <= 1e-12 && worst <= 1e-12;
    return {10, "insurance-demo", pass,
            fmt("system_residual=%.2e y0_oracle_error=%.2e", path.residual, worst)};
}

CriterionResult c11_contraction(std::uint64_t seed) {
    const auto topo = TreeTopology::rademacher(3);
    ContinuationOptions opt;
    double worst_factor = 0.0;
    for (int i = 0; i < 4; ++i) {
        const int cs = 1 + i % 2;
        const auto fam = make_monotone_family(topo, 2, 1, 0.1, seed * 45 + i, cs);
        const auto pert = PerturbationData::random(topo, 2, seed * 46 + i, 1.0);
        const auto res = solve_fbsde(fam.coefficients, fam.domination, pert, 1.0, opt, topo);
        for (const auto& lvl : res.diagnostics.levels)
            worst_factor = std::max(worst_factor, lvl.contraction);
    }

    // oversized forced step must fail with diagnostics, not a wrong answer
    const auto fam = make_monotone_family(topo, 2, 1, 0.0, seed * 47, 1);
    const CoefficientSet stiff = inflate_coupling(fam.coefficients, 5.0);
    const auto pert = PerturbationData::random(topo, 2, seed * 48, 1.0);
    ContinuationOptions tight;
    tight.delta_init = 1.0;
    tight.delta_min = 0.6;
    bool clean_failure = false;
    try {
        solve_fbsde(stiff, fam.domination, pert, 1.0, tight, topo);
    } catch (const ConvergenceError& e) {
        clean_failure = !e.diagnostics.alpha_grid.empty();
    }
    const bool pass = worst_factor < 1.0 && clean_failure;
    return {11, "contraction-measurement", pass,
            fmt("max_accepted_factor=%.3f clean_failure=%.0f", worst_factor,
                clean_failure ? 1.0 : 0.0)};
}

}  // namespace

std::vector<CriterionResult> run(const std::vector<int>& criteria, std::uint64_t seed) {
    using Fn = std::function<CriterionResult(std::uint64_t)>;
    const Fn table[] = {c1_oracle_equivalence, c2_uniqueness,     c3_residual_contract,
                        c4_monotonicity_sampling, c5_duality_balance, c6_estimate_homogeneity,
                        c7_flq_hand_instance,  c8_lq_optimality,  c9_bsde_martingale,
                        c10_insurance,         c11_contraction};
    std::vector<CriterionResult> out;
    for (int id : criteria) {
        if (id < 1 || id > 11) throw UsageError("unknown criterion id " + std::to_string(id));
        out.push_back(table[id - 1](seed));
    }
    return out;
}

std::vector<CriterionResult> run_all(std::uint64_t seed) {
    std::vector<int> ids;
    for (int i = 1; i <= 11; ++i) ids.push_back(i);
    return run(ids, seed);
}

std::string format_line(const CriterionResult& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "[%2d] %s %s (%s)", r.id, r.pass ? "PASS" : "FAIL",
                  r.name.c_str(), r.details.c_str());
    return std::string(buf);
}

}  // namespace sdetree::acceptance
