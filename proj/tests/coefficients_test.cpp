#include <doctest.h>

#include "sdetree/coefficients.hpp"
#include "sdetree/rng.hpp"

using namespace sdetree;

namespace {

// pairing slack of the coupling monotonicity inequality at a fixed sample
double coupling_slack(const CoefficientSet& co, const DominationData& dom, int k, NodeId v,
                      const Vec& x, const Vec& yp, const Vec& zp, const Vec& xb, const Vec& ypb,
                      const Vec& zpb) {
    const Vec fd = co.driver(k, v, x, yp, zp) - co.driver(k, v, xb, ypb, zpb);
    const Vec bd = co.drift(k, v, x, yp, zp) - co.drift(k, v, xb, ypb, zpb);
    const Vec sd = co.diffusion(k, v, x, yp, zp) - co.diffusion(k, v, xb, ypb, zpb);
    const Vec xh = x - xb, yh = yp - ypb, zh = zp - zpb;
    const auto [ph, qh] = pq_maps(dom, k, v, xh, yh, zh);
    const double pairing = fd.dot(xh) + bd.dot(yh) + sd.dot(zh);
    return -dom.nu * ph.squaredNorm() - dom.mu * qh.squaredNorm() - pairing;
}

}  // namespace

TEST_CASE("pq_maps computes the channel products") {
    const auto topo = TreeTopology::rademacher(2);
    DominationData dom;
    dom.mu = 1.0;
    dom.M = Mat::Identity(2, 2);
    dom.G = NodeIndexed<Mat>(Mat::Zero(1, 2));
    DominationData::StepMats sm;
    sm.A = NodeIndexed<Mat>(Mat::Identity(2, 2));
    sm.B = NodeIndexed<Mat>(Mat::Identity(2, 2));
    sm.C = NodeIndexed<Mat>(Mat::Zero(2, 2));
    dom.steps = {sm, sm};

    Vec x(2), yp(2), zp(2);
    x << 1.0, 2.0;
    yp << 3.0, 0.0;
    zp << 7.0, 0.0;
    auto [p, q] = pq_maps(dom, 0, NodeId{0, 0}, x, yp, zp);
    CHECK(p(0) == doctest::Approx(1.0));
    CHECK(p(1) == doctest::Approx(2.0));
    CHECK(q(0) == doctest::Approx(3.0));

    dom.steps[0].C = NodeIndexed<Mat>(Mat::Identity(2, 2));
    auto [p2, q2] = pq_maps(dom, 0, NodeId{0, 0}, x, yp, zp);
    CHECK(q2(0) == doctest::Approx(10.0));

    Vec bad(3);
    CHECK_THROWS_AS(pq_maps(dom, 0, NodeId{0, 0}, bad, yp, zp), ShapeError);
}

TEST_CASE("blend at alpha=1 reproduces the coefficients pointwise") {
    const auto topo = TreeTopology::rademacher(3);
    const auto fam = make_monotone_family(topo, 2, 1, 0.1, 42, 1);
    const CoefficientSet b1 = blend_alpha(fam.coefficients, fam.domination, 1.0);

    Rng rng(7);
    for (int t = 0; t < 20; ++t) {
        const int k = t % 3;
        const NodeId v{k, static_cast<std::int64_t>(
                              rng.below(static_cast<std::uint64_t>(topo.level_size(k))))};
        const Vec x = rng.gauss_vector(2), yp = rng.gauss_vector(2), zp = rng.gauss_vector(2);
        CHECK((fam.coefficients.driver(k, v, x, yp, zp) - b1.driver(k, v, x, yp, zp))
                  .cwiseAbs()
                  .maxCoeff() < 1e-15);
        CHECK((fam.coefficients.drift(k, v, x, yp, zp) - b1.drift(k, v, x, yp, zp))
                  .cwiseAbs()
                  .maxCoeff() < 1e-15);
        CHECK((fam.coefficients.diffusion(k, v, x, yp, zp) - b1.diffusion(k, v, x, yp, zp))
                  .cwiseAbs()
                  .maxCoeff() < 1e-15);
        CHECK((fam.coefficients.initial_map(x) - b1.initial_map(x)).cwiseAbs().maxCoeff() <
              1e-15);
        const NodeId u{3, v.index};
        CHECK((fam.coefficients.terminal_map(u, x) - b1.terminal_map(u, x))
                  .cwiseAbs()
                  .maxCoeff() < 1e-15);
    }

    CHECK_THROWS_AS(blend_alpha(fam.coefficients, fam.domination, 1.5), UsageError);
}

TEST_CASE("blend at alpha=0 collapses to the channel core") {
    const auto topo = TreeTopology::rademacher(3);

    // Case 2: f^0 = -nu A^T A x at probes
    const auto fam2 = make_monotone_family(topo, 2, 2, 0.2, 5, 2);
    const CoefficientSet b0 = blend_alpha(fam2.coefficients, fam2.domination, 0.0);
    Rng rng(11);
    for (int t = 0; t < 10; ++t) {
        const Vec x = rng.gauss_vector(2), yp = rng.gauss_vector(2), zp = rng.gauss_vector(2);
        const Mat& A = fam2.domination.steps[1].A.at(0);
        const Vec want = -fam2.domination.nu * A.transpose() * (A * x);
        CHECK((b0.driver(1, NodeId{1, 0}, x, yp, zp) - want).cwiseAbs().maxCoeff() < 1e-14);
    }

    // Case 1: b^0 depends only on (y', z'), not on x
    const auto fam1 = make_monotone_family(topo, 2, 1, 0.2, 6, 1);
    const CoefficientSet c0 = blend_alpha(fam1.coefficients, fam1.domination, 0.0);
    const Vec yp = rng.gauss_vector(2), zp = rng.gauss_vector(2);
    const Vec xa = rng.gauss_vector(2), xb = rng.gauss_vector(2);
    CHECK((c0.drift(0, NodeId{0, 0}, xa, yp, zp) - c0.drift(0, NodeId{0, 0}, xb, yp, zp))
              .cwiseAbs()
              .maxCoeff() < 1e-15);
}

TEST_CASE("monotone family passes its own checker in both cases and gains") {
    const auto topo = TreeTopology::rademacher(3);
    for (int cs : {1, 2}) {
        for (double g : {0.0, 0.1}) {
            const auto fam = make_monotone_family(topo, 2, 1, g, 7, cs);
            const auto rep = check_conditions(fam.coefficients, fam.domination, topo, 10000,
                                              321, 1e-12);
            CHECK(rep.total_violations() == 0);
            CHECK(rep.monotonicity_violations() == 0);
        }
    }
}

TEST_CASE("sign-flipped family passes the flipped monotonicity") {
    const auto topo = TreeTopology::rademacher(3);
    const auto fam = make_monotone_family(topo, 2, 1, 0.1, 9, 1);
    const CoefficientSet neg = negated(fam.coefficients);
    const auto rep = check_conditions(neg, fam.domination, topo, 10000, 11, 1e-12,
                                      Orientation::Flipped);
    CHECK(rep.monotonicity_violations() == 0);
    // and the flipped check fails on the original orientation
    const auto bad = check_conditions(fam.coefficients, fam.domination, topo, 1000, 11, 1e-12,
                                      Orientation::Flipped);
    CHECK(bad.monotonicity_violations() > 0);
}

TEST_CASE("degenerate pairs give zero slack and zero Lipschitz estimates") {
    const auto topo = TreeTopology::rademacher(2);
    const auto fam = make_monotone_family(topo, 2, 1, 0.1, 3, 1);
    const auto rep = check_conditions(fam.coefficients, fam.domination, topo, 200, 1, 1e-12,
                                      Orientation::Standard, 0.0);
    CHECK(rep.total_violations() == 0);
    CHECK(rep.mono_coupling.worst_slack == doctest::Approx(0.0));
    CHECK(rep.lip_driver == doctest::Approx(0.0));
    CHECK(rep.lip_initial == doctest::Approx(0.0));
}

TEST_CASE("checker rejects an empty sample budget") {
    const auto topo = TreeTopology::rademacher(2);
    const auto fam = make_monotone_family(topo, 2, 1, 0.0, 1, 1);
    CHECK_THROWS_AS(check_conditions(fam.coefficients, fam.domination, topo, 0, 1, 1e-12),
                    UsageError);
}

TEST_CASE("empirical Lipschitz estimates bracket the affine operator norm") {
    const auto topo = TreeTopology::rademacher(3);
    const auto fam = make_monotone_family(topo, 2, 1, 0.0, 19, 1);
    const auto rep = check_conditions(fam.coefficients, fam.domination, topo, 10000, 5, 1e-12);

    // exact Lipschitz constant of the affine driver w.r.t. theta, worst step
    double exact = 0.0;
    for (const auto& blk : fam.coefficients.steps) {
        const auto& f = blk.driver.at(0);
        Mat jac(2, 6);
        jac << f.x_blk, f.yp_blk, f.zp_blk;
        Eigen::JacobiSVD<Mat> svd(jac);
        exact = std::max(exact, svd.singularValues()(0));
    }
    CHECK(rep.lip_driver <= exact + 1e-9);
    CHECK(rep.lip_driver >= 0.5 * exact);
}

TEST_CASE("generator is deterministic and validates gain") {
    const auto topo = TreeTopology::rademacher(3);
    const auto a = make_monotone_family(topo, 2, 1, 0.1, 7, 1);
    const auto b = make_monotone_family(topo, 2, 1, 0.1, 7, 1);
    Rng rng(2);
    for (int t = 0; t < 5; ++t) {
        const Vec x = rng.gauss_vector(2), yp = rng.gauss_vector(2), zp = rng.gauss_vector(2);
        CHECK((a.coefficients.driver(1, NodeId{1, 1}, x, yp, zp) -
               b.coefficients.driver(1, NodeId{1, 1}, x, yp, zp))
                  .cwiseAbs()
                  .maxCoeff() == 0.0);
    }
    CHECK_THROWS_AS(make_monotone_family(topo, 2, 1, 50.0, 7, 1), UsageError);
    CHECK_THROWS_AS(make_monotone_family(topo, 2, 1, 0.1, 7, 3), UsageError);
}

TEST_CASE("blending preserves the conditions with the same constants") {
    const auto topo = TreeTopology::rademacher(3);
    for (int cs : {1, 2}) {
        const auto fam = make_monotone_family(topo, 2, 1, 0.1, 13, cs);
        for (double alpha : {0.0, 0.3, 0.7}) {
            const CoefficientSet blended = blend_alpha(fam.coefficients, fam.domination, alpha);
            const auto rep =
                check_conditions(blended, fam.domination, topo, 4000, 77, 1e-12);
            CHECK(rep.total_violations() == 0);
        }
    }
}

TEST_CASE("coupling slack is affine in alpha at fixed samples") {
    const auto topo = TreeTopology::rademacher(3);
    const auto fam = make_monotone_family(topo, 2, 1, 0.1, 17, 1);
    const CoefficientSet b0 = blend_alpha(fam.coefficients, fam.domination, 0.0);
    const CoefficientSet b1 = blend_alpha(fam.coefficients, fam.domination, 1.0);

    Rng rng(23);
    for (int t = 0; t < 25; ++t) {
        const int k = t % 3;
        const NodeId v{k, 0};
        const Vec x = rng.gauss_vector(2), yp = rng.gauss_vector(2), zp = rng.gauss_vector(2);
        const Vec xb = rng.gauss_vector(2), ypb = rng.gauss_vector(2), zpb = rng.gauss_vector(2);
        const double s0 = coupling_slack(b0, fam.domination, k, v, x, yp, zp, xb, ypb, zpb);
        const double s1 = coupling_slack(b1, fam.domination, k, v, x, yp, zp, xb, ypb, zpb);
        for (double alpha : {0.25, 0.5, 0.8}) {
            const CoefficientSet ba = blend_alpha(fam.coefficients, fam.domination, alpha);
            const double sa = coupling_slack(ba, fam.domination, k, v, x, yp, zp, xb, ypb, zpb);
            CHECK(std::abs(sa - (alpha * s1 + (1.0 - alpha) * s0)) < 1e-12);
        }
    }
}
