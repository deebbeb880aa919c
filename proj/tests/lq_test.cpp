#include <doctest.h>

#include <cmath>

#include "sdetree/lq.hpp"
#include "sdetree/rng.hpp"

using namespace sdetree;

namespace {

Mat random_psd(Rng& rng, int n, double norm) {
    Mat x = rng.gauss_matrix(n, n);
    Mat s = x.transpose() * x;
    Eigen::SelfAdjointEigenSolver<Mat> es(s);
    const double top = es.eigenvalues().cwiseAbs().maxCoeff();
    return top > 0 ? Mat(s * (norm / top)) : Mat::Identity(n, n) * norm;
}

ForwardLqData scalar_flq_hand() {
    // N = 1, n = m = 1, A = B = 1, b = 1, C = D = sigma = 0, M = G = R = 1, Q = 0
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
    return d;
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
        d.R.push_back(
            NodeIndexed<Mat>(Mat(Mat::Identity(m, m) * (0.6 + 0.4 * rng.uniform()))));
    }
    d.M = Mat::Identity(n, n) + random_psd(rng, n, 0.5);
    // terminal weight varies per level-N node
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
        d.R.push_back(
            NodeIndexed<Mat>(Mat(Mat::Identity(m, m) * (0.6 + 0.4 * rng.uniform()))));
    }
    d.eta = rng.gauss_matrix(n, topo.level_size(N));
    d.M = Mat::Identity(n, n) + random_psd(rng, n, 0.5);
    d.r_floor = 0.5;
    return d;
}

double control_diff_sq(const ControlProcess& a, const ControlProcess& b,
                       const TreeTopology& topo) {
    double acc = 0.0;
    for (int k = 0; k < topo.horizon(); ++k)
        acc += expectation_sq(a.field(k) - b.field(k), k, topo);
    return acc;
}

}  // namespace

TEST_CASE("flq assembly: hand arithmetic and control collapse") {
    // all scalar coefficients one, Q = 0
    ForwardLqData ones = scalar_flq_hand();
    ones.C = {NodeIndexed<Mat>(Mat::Ones(1, 1))};
    ones.D = {NodeIndexed<Mat>(Mat::Ones(1, 1))};
    const auto asmb_ones = assemble_flq(ones);

    // backward value A^T y' + C^T z' + Q x at theta = (1,1,1) is 2
    Vec one = Vec::Ones(1);
    const Vec f = asmb_ones.coefficients.driver(0, NodeId{0, 0}, one, one, one);
    CHECK(-f(0) == doctest::Approx(2.0));
    CHECK(asmb_ones.report.monotonicity_violations() == 0);

    // D = C = 0, R = I, B = I: the substituted control is -y'
    ForwardLqData d = scalar_flq_hand();
    const auto asmb = assemble_flq(d);
    CHECK(asmb.report.monotonicity_violations() == 0);
    const Vec zero = Vec::Zero(1);
    const Vec drift = asmb.coefficients.drift(0, NodeId{0, 0}, zero, one, zero);
    // drift = A x + B ubar + b0 = 0 + (-1) + 1
    CHECK(drift(0) == doctest::Approx(0.0));
}

TEST_CASE("flq hand instance: oracle first, then the Hamiltonian solve") {
    ForwardLqData d = scalar_flq_hand();

    const auto oracle = oracle_flq(d);
    CHECK(oracle.xi(0) == doctest::Approx(-1.0 / 3.0).epsilon(1e-12));
    CHECK(oracle.u.field(0)(0, 0) == doctest::Approx(-1.0 / 3.0).epsilon(1e-12));
    CHECK(oracle.cost == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
    CHECK(oracle.gradient_norm <= 1e-10);

    ContinuationOptions opt;
    const auto sol = solve_flq(d, opt);
    CHECK(sol.xi(0) == doctest::Approx(-1.0 / 3.0).epsilon(1e-10));
    CHECK(sol.u.field(0)(0, 0) == doctest::Approx(-1.0 / 3.0).epsilon(1e-10));
    CHECK(sol.cost == doctest::Approx(1.0 / 6.0).epsilon(1e-10));
    CHECK(sol.stationarity <= 1e-10);

    // the criterion value recomputed at the extracted pair
    CHECK(cost_flq(d, sol.xi, sol.u) == doctest::Approx(1.0 / 6.0).epsilon(1e-10));
}

TEST_CASE("flq homogeneous data is minimized by zero") {
    const auto topo = TreeTopology::rademacher(3);
    ForwardLqData d = random_flq(topo, 2, 1, 900);
    for (int k = 0; k < 3; ++k) {
        d.b0[static_cast<std::size_t>(k)] = NodeIndexed<Vec>(Vec::Zero(2));
        d.sigma0[static_cast<std::size_t>(k)] = NodeIndexed<Vec>(Vec::Zero(2));
    }
    ContinuationOptions opt;
    const auto sol = solve_flq(d, opt);
    CHECK(sol.xi.cwiseAbs().maxCoeff() <= 1e-9);
    CHECK(sol.cost <= 1e-16);
    CHECK(control_diff_sq(sol.u, ControlProcess(topo, 1, 0, 2), topo) <= 1e-18);

    // quadratic homogeneity of the criterion
    Rng rng(7);
    const Vec xi = rng.gauss_vector(2);
    ControlProcess u = random_adapted(topo, 1, 0, 2, 8);
    const double j1 = cost_flq(d, xi, u);
    ControlProcess u2 = u;
    for (int k = 0; k < 3; ++k) u2.field(k) *= 2.0;
    const double j2 = cost_flq(d, Vec(2.0 * xi), u2);
    CHECK(j2 == doctest::Approx(4.0 * j1).epsilon(1e-12));
}

TEST_CASE("flq random instances: oracle agreement, optimality gap, cost identity") {
    const auto topo = TreeTopology::rademacher(4);
    ContinuationOptions opt;
    opt.tolerance = 1e-12;  // the cost-identity defect scales with the solve accuracy
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        ForwardLqData d = random_flq(topo, 2, 1, seed);
        const auto sol = solve_flq(d, opt);
        const auto oracle = oracle_flq(d);

        const double du = std::sqrt(control_diff_sq(sol.u, oracle.u, topo));
        CHECK(du <= 1e-8);
        CHECK((sol.xi - oracle.xi).norm() <= 1e-8);
        CHECK(sol.cost == doctest::Approx(oracle.cost).epsilon(1e-10));
        CHECK(sol.stationarity <= 1e-10);

        // x from the Hamiltonian pair equals the re-simulated state
        SdeProblem sim;
        sim.topology = topo;
        sim.dim = 2;
        sim.initial = sol.xi;
        const ForwardLqData& dd = d;
        const ControlProcess& uu = sol.u;
        sim.drift = [&dd, &uu](int k, NodeId v, const Vec& x) -> Vec {
            const auto ks = static_cast<std::size_t>(k);
            return dd.A[ks].at(v.index) * x + dd.B[ks].at(v.index) * uu.field(k).col(v.index) +
                   dd.b0[ks].at(v.index);
        };
        sim.diffusion = [&dd, &uu](int k, NodeId v, const Vec& x) -> Vec {
            const auto ks = static_cast<std::size_t>(k);
            return dd.C[ks].at(v.index) * x + dd.D[ks].at(v.index) * uu.field(k).col(v.index) +
                   dd.sigma0[ks].at(v.index);
        };
        const AdaptedProcess xsim = solve_sde(sim);
        double dx = 0.0;
        for (int k = 0; k <= 4; ++k)
            dx += expectation_sq(xsim.field(k) - sol.x.field(k), k, topo);
        CHECK(std::sqrt(dx) <= 1e-8);

        // optimality gap against random admissible comparisons
        for (int t = 0; t < 20; ++t) {
            const ControlProcess cmp = random_adapted(topo, 1, 0, 3, 1000 + t);
            Rng rng(2000 + t);
            const Vec xi = rng.gauss_vector(2);
            const double jc = cost_flq(d, xi, cmp);
            CHECK(jc - sol.cost >= -1e-10);

            // criterion difference two ways
            SdeProblem side = sim;
            side.initial = xi;
            const ControlProcess& cc = cmp;
            side.drift = [&dd, &cc](int k, NodeId v, const Vec& x) -> Vec {
                const auto ks = static_cast<std::size_t>(k);
                return dd.A[ks].at(v.index) * x +
                       dd.B[ks].at(v.index) * cc.field(k).col(v.index) + dd.b0[ks].at(v.index);
            };
            side.diffusion = [&dd, &cc](int k, NodeId v, const Vec& x) -> Vec {
                const auto ks = static_cast<std::size_t>(k);
                return dd.C[ks].at(v.index) * x +
                       dd.D[ks].at(v.index) * cc.field(k).col(v.index) +
                       dd.sigma0[ks].at(v.index);
            };
            const AdaptedProcess xcmp = solve_sde(side);
            double quad = (xi - sol.xi).dot(d.M * (xi - sol.xi));
            const Mat xN = xcmp.field(4) - sol.x.field(4);
            for (std::int64_t vv = 0; vv < xN.cols(); ++vv)
                quad += topo.node_prob(NodeId{4, vv}) * xN.col(vv).dot(d.G.at(vv) * xN.col(vv));
            for (int k = 0; k < 4; ++k) {
                const auto ks = static_cast<std::size_t>(k);
                for (std::int64_t vv = 0; vv < topo.level_size(k); ++vv) {
                    const double p = topo.node_prob(NodeId{k, vv});
                    const Vec xh = xcmp.field(k).col(vv) - sol.x.field(k).col(vv);
                    const Vec uh = cmp.field(k).col(vv) - sol.u.field(k).col(vv);
                    quad += p * (xh.dot(d.Q[ks].at(vv) * xh) + uh.dot(d.R[ks].at(vv) * uh));
                }
            }
            CHECK(std::abs((jc - sol.cost) - 0.5 * quad) <= 1e-10);
        }
    }
}

TEST_CASE("flq with node-indexed offsets and weights matches the oracle") {
    const auto topo = TreeTopology::rademacher(3);
    ForwardLqData d = random_flq(topo, 2, 1, 777);
    Rng rng(778);
    for (int k = 0; k < 3; ++k) {
        std::vector<Vec> offs;
        std::vector<Mat> dmats;
        for (std::int64_t v = 0; v < topo.level_size(k); ++v) {
            offs.push_back(Vec(0.5 * rng.gauss_vector(2)));
            dmats.push_back(Mat(0.3 * rng.gauss_matrix(2, 1)));
        }
        d.b0[static_cast<std::size_t>(k)] = NodeIndexed<Vec>(std::move(offs));
        d.D[static_cast<std::size_t>(k)] = NodeIndexed<Mat>(std::move(dmats));
    }
    ContinuationOptions opt;
    const auto sol = solve_flq(d, opt);
    const auto oracle = oracle_flq(d);
    CHECK((sol.xi - oracle.xi).norm() <= 1e-8);
    CHECK(std::sqrt(control_diff_sq(sol.u, oracle.u, topo)) <= 1e-8);
    CHECK(sol.cost == doctest::Approx(oracle.cost).epsilon(1e-10));
}

TEST_CASE("blq: zero data, uncontrollable channel, oracle agreement") {
    const auto topo = TreeTopology::rademacher(4);
    ContinuationOptions opt;

    SUBCASE("zero data gives the zero solution and zero cost") {
        BackwardLqData d = random_blq(topo, 2, 1, 500);
        d.eta.setZero();
        for (int k = 0; k < 4; ++k)
            d.alpha0[static_cast<std::size_t>(k)] = NodeIndexed<Vec>(Vec::Zero(2));
        const auto sol = solve_blq(d, opt);
        CHECK(std::sqrt(pair_n2_sq(SolutionPair{sol.x, sol.y}, topo)) <= 1e-10);
        CHECK(sol.cost <= 1e-16);
        CHECK(control_diff_sq(sol.v, ControlProcess(topo, 1, 0, 3), topo) <= 1e-18);
    }

    SUBCASE("C = 0 forces the zero control") {
        BackwardLqData d = random_blq(topo, 2, 1, 501);
        for (int k = 0; k < 4; ++k)
            d.C[static_cast<std::size_t>(k)] = NodeIndexed<Mat>(Mat::Zero(2, 1));
        const auto sol = solve_blq(d, opt);
        CHECK(control_diff_sq(sol.v, ControlProcess(topo, 1, 0, 3), topo) <= 1e-18);
    }

    SUBCASE("random instances match the stacked oracle") {
        for (std::uint64_t seed : {21u, 22u}) {
            BackwardLqData d = random_blq(topo, 2, 1, seed);
            const auto sol = solve_blq(d, opt);
            const auto oracle = oracle_blq(d);
            CHECK(std::sqrt(control_diff_sq(sol.v, oracle.v, topo)) <= 1e-8);
            CHECK(sol.cost == doctest::Approx(oracle.cost).epsilon(1e-10));
            CHECK(sol.stationarity <= 1e-10);

            // y from the Hamiltonian equals the controlled backward solve
            BsdeProblem check;
            check.topology = topo;
            check.dim = 2;
            check.terminal = d.eta;
            const BackwardLqData& dd = d;
            const ControlProcess& vv = sol.v;
            check.driver = [&dd, &vv](int k, NodeId node, const Vec& yp, const Vec& zp) -> Vec {
                const auto ks = static_cast<std::size_t>(k);
                return dd.A[ks].at(node.index) * yp + dd.B[ks].at(node.index) * zp +
                       dd.C[ks].at(node.index) * vv.field(k).col(node.index) +
                       dd.alpha0[ks].at(node.index);
            };
            const AdaptedProcess ysim = solve_bsde(check);
            double dy = 0.0;
            for (int k = 0; k <= 4; ++k)
                dy += expectation_sq(ysim.field(k) - sol.y.field(k), k, topo);
            CHECK(std::sqrt(dy) <= 1e-8);

            for (int t = 0; t < 20; ++t) {
                const ControlProcess cmp = random_adapted(topo, 1, 0, 3, 3000 + t);
                CHECK(cost_blq(d, cmp) - sol.cost >= -1e-10);
            }
        }
    }
}

TEST_CASE("degenerate LQ weights are rejected at validation") {
    ForwardLqData d = scalar_flq_hand();
    d.M = Mat::Zero(1, 1);  // not positive definite
    CHECK_THROWS_AS(assemble_flq(d), UsageError);

    ForwardLqData asym = scalar_flq_hand();
    asym.n = 2;  // declared dimension no longer matches the 1x1 blocks
    CHECK_THROWS_AS(assemble_flq(asym), ShapeError);
}

TEST_CASE("insurance demo") {
    SUBCASE("deterministic compounding with no investment or payout") {
        const auto topo = TreeTopology::rademacher(3);
        InsuranceParams p;
        p.rate = {0.02, 0.03, 0.01};
        p.premium = {0.04, 0.04, 0.04};
        p.vol = {0.2, 0.2, 0.2};
        p.growth = {0.05, 0.05, 0.05};
        p.payout = {0.0, 0.0, 0.0};
        p.initial_wealth = 1.0;
        const ControlProcess u(topo, 1, 0, 2);
        const auto path = insurance_demo(topo, p, u);
        const double want = 1.02 * 1.03 * 1.01;
        CHECK(path.wealth.field(3)(0, 5) == doctest::Approx(want).epsilon(1e-14));
        for (std::size_t k = 0; k < path.liability.size(); ++k)
            CHECK(path.liability[k].cwiseAbs().maxCoeff() == doctest::Approx(0.0));
        CHECK(path.residual <= 1e-12);
    }

    SUBCASE("hand backward accumulation at N = 2") {
        const auto topo = TreeTopology::rademacher(2);
        InsuranceParams p;
        p.rate = {0.0, 0.0};
        p.premium = {0.0, 0.0};
        p.vol = {0.1, 0.1};
        p.growth = {0.0, 0.0};
        p.payout = {1.0, 1.0};
        p.initial_wealth = 1.0;
        const ControlProcess u(topo, 1, 0, 1);
        const auto path = insurance_demo(topo, p, u);
        CHECK((path.liability[1].array() + 1.0).abs().maxCoeff() == doctest::Approx(0.0));
        CHECK((path.liability[0].array() + 2.0).abs().maxCoeff() == doctest::Approx(0.0));
        CHECK(path.residual <= 1e-12);
    }

    SUBCASE("volatility must be positive and shapes checked") {
        const auto topo = TreeTopology::rademacher(2);
        InsuranceParams p;
        p.rate = {0.0, 0.0};
        p.premium = {0.0, 0.0};
        p.vol = {0.1, 0.0};
        p.growth = {0.0, 0.0};
        p.payout = {0.0, 0.0};
        const ControlProcess u(topo, 1, 0, 1);
        CHECK_THROWS_AS(insurance_demo(topo, p, u), UsageError);
    }
}
