#include <doctest.h>

#include "sdetree/tree.hpp"

using namespace sdetree;

TEST_CASE("topology invariants are enforced at construction") {
    CHECK_NOTHROW(TreeTopology::rademacher(3));

    Vec w(2), p(2);
    w << 1.0, -1.0;
    p << 0.6, 0.5;
    CHECK_THROWS_AS(TreeTopology(3, w, p), UsageError);  // mass 1.1

    p << 0.5, 0.5;
    w << 1.0, -0.5;
    CHECK_THROWS_AS(TreeTopology(3, w, p), UsageError);  // nonzero mean

    w << 0.5, -0.5;
    CHECK_THROWS_AS(TreeTopology(3, w, p), UsageError);  // second moment 0.25

    CHECK_THROWS_AS(TreeTopology(0, w, p), UsageError);

    // asymmetric two-point law with the right moments: w = (2, -1/2), p = (1/5, 4/5)
    Vec wa(2), pa(2);
    wa << 2.0, -0.5;
    pa << 0.2, 0.8;
    CHECK_NOTHROW(TreeTopology(3, wa, pa));
}

TEST_CASE("node indexing walks the digit string") {
    const auto topo = TreeTopology::rademacher(4);
    const NodeId root{0, 0};
    const NodeId c1 = topo.child(root, 1);
    CHECK(c1.level == 1);
    CHECK(c1.index == 1);
    const NodeId c10 = topo.child(c1, 0);
    CHECK(c10.index == 2);
    CHECK(topo.parent(c10).index == 1);
    CHECK(topo.level_size(4) == 16);
    CHECK_THROWS_AS(topo.level_size(5), ShapeError);
}

TEST_CASE("level probabilities sum to one") {
    Vec w(2), p(2);
    w << 2.0, -0.5;
    p << 0.2, 0.8;
    const TreeTopology topo(5, w, p);
    for (int k = 0; k <= 5; ++k) {
        double mass = 0.0;
        for (std::int64_t v = 0; v < topo.level_size(k); ++v)
            mass += topo.node_prob(NodeId{k, v});
        CHECK(mass == doctest::Approx(1.0).epsilon(1e-14));
    }
}

TEST_CASE("cond_prev on hand fields") {
    const auto topo = TreeTopology::rademacher(2);

    // two-point average by definition
    Mat y(1, 2);
    y << 2.0, 4.0;
    const CondPair cp = cond_prev(y, 1, topo);
    CHECK(cp.mean(0, 0) == doctest::Approx(3.0));
    CHECK(cp.weighted(0, 0) == doctest::Approx(-1.0));

    // constant field has zero weighted part
    Mat c(1, 4);
    c << 7.0, 7.0, 7.0, 7.0;
    const CondPair cc = cond_prev(c, 2, topo);
    CHECK(cc.mean(0, 1) == doctest::Approx(7.0));
    CHECK(cc.weighted(0, 0) == doctest::Approx(0.0));

    // copy of the noise averages to zero with unit weighted part
    Mat s(1, 2);
    s << topo.shock(0), topo.shock(1);
    const CondPair cs = cond_prev(s, 1, topo);
    CHECK(cs.mean(0, 0) == doctest::Approx(0.0));
    CHECK(cs.weighted(0, 0) == doctest::Approx(1.0));

    Mat bad(1, 3);
    CHECK_THROWS_AS(cond_prev(bad, 1, topo), ShapeError);
}

TEST_CASE("tower property and conditional Jensen hold on random fields") {
    // three-point law w = (1.5, 0, -1) with p = (4/15, 1/3, 2/5): zero mean,
    // unit second moment
    Vec w(3), p(3);
    w << 1.5, 0.0, -1.0;
    p(0) = 1.0 / 3.75;
    p(2) = 1.5 * p(0);
    p(1) = 1.0 - p(0) - p(2);
    const TreeTopology topo(3, w, p);
    const int q = topo.branching();

    const AdaptedProcess proc = random_adapted(topo, 2, 0, 3, 99);
    const Mat& y = proc.field(3);

    // tower: iterated one-step conditioning equals the direct two-step
    // weighted average over grandchildren
    const CondPair one = cond_prev(y, 3, topo);
    const CondPair two = cond_prev(one.mean, 2, topo);
    Mat direct = Mat::Zero(y.rows(), topo.level_size(1));
    for (std::int64_t v = 0; v < direct.cols(); ++v)
        for (int j = 0; j < q; ++j)
            for (int l = 0; l < q; ++l)
                direct.col(v) += topo.branch_prob(j) * topo.branch_prob(l) *
                                 y.col((v * q + j) * q + l);
    CHECK((two.mean - direct).cwiseAbs().maxCoeff() < 1e-14);

    // Jensen: E|y'|^2 <= E|y|^2 and E|z'|^2 <= E|y|^2
    const double ey = expectation_sq(y, 3, topo);
    CHECK(expectation_sq(one.mean, 2, topo) <= ey + 1e-14);
    CHECK(expectation_sq(one.weighted, 2, topo) <= ey + 1e-14);
}

TEST_CASE("aggregate matches the hand examples") {
    const auto topo = TreeTopology::rademacher(3);

    AdaptedProcess zero(topo, 1, 0, 3);
    CHECK(aggregate(zero, NormKind::N2, topo) == doctest::Approx(0.0));

    AdaptedProcess ones(topo, 1, 0, 3);
    for (int k = 0; k <= 3; ++k) ones.field(k).setOnes();
    CHECK(aggregate(ones, NormKind::N2, topo) == doctest::Approx(4.0));

    // x_1 = w_0, other times zero: squared norm is E[w^2] = 1
    AdaptedProcess noise(topo, 1, 0, 3);
    noise.field(1)(0, 0) = topo.shock(0);
    noise.field(1)(0, 1) = topo.shock(1);
    CHECK(aggregate(noise, NormKind::N2, topo) == doctest::Approx(1.0));

    CHECK_THROWS_AS(aggregate(ones, NormKind::H, topo), UsageError);
}

TEST_CASE("random_adapted is deterministic in the seed") {
    const auto topo = TreeTopology::rademacher(4);
    const AdaptedProcess a = random_adapted(topo, 3, 0, 4, 1234);
    const AdaptedProcess b = random_adapted(topo, 3, 0, 4, 1234);
    const AdaptedProcess c = random_adapted(topo, 3, 0, 4, 1235);
    bool same = true, differs = false;
    for (int k = 0; k <= 4; ++k) {
        same = same && (a.field(k) - b.field(k)).cwiseAbs().maxCoeff() == 0.0;
        differs = differs || (a.field(k) - c.field(k)).cwiseAbs().maxCoeff() > 0.0;
    }
    CHECK(same);
    CHECK(differs);
    CHECK_THROWS_AS(random_adapted(topo, 0, 0, 4, 7), UsageError);
}
