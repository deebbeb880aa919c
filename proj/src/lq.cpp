#include "sdetree/lq.hpp"

#include <cmath>
#include <string>

#include "sdetree/rng.hpp"

namespace sdetree {

namespace {

void require_symmetric(const Mat& a, const char* what) {
    if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12)
        throw UsageError(std::string(what) + " must be symmetric");
}

double min_eigenvalue(const Mat& a) {
    Eigen::SelfAdjointEigenSolver<Mat> es(a);
    return es.eigenvalues()(0);
}

Mat principal_sqrt(const Mat& a) {
    Eigen::SelfAdjointEigenSolver<Mat> es(a);
    if (es.eigenvalues()(0) < -1e-12) throw UsageError("matrix square root needs PSD input");
    const Vec lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

template <class CheckFn>
void for_each_item(const std::vector<NodeIndexed<Mat>>& seq, CheckFn&& fn) {
    for (const auto& step : seq)
        for (std::size_t i = 0; i < step.stored(); ++i)
            fn(step.at(static_cast<std::int64_t>(i)));
}

/// Exact quadratic model of a functional by finite evaluation; third
/// differences of a quadratic vanish, so the fit is exact up to roundoff.
struct QuadraticModel {
    Mat hessian;
    Vec gradient0;  // gradient at zero
    double value0 = 0.0;
};

template <class Functional>
QuadraticModel fit_quadratic(Eigen::Index dim, Functional&& J) {
    QuadraticModel qm;
    qm.value0 = J(Vec::Zero(dim));
    qm.gradient0 = Vec::Zero(dim);
    qm.hessian = Mat::Zero(dim, dim);
    std::vector<double> plus(static_cast<std::size_t>(dim));
    for (Eigen::Index i = 0; i < dim; ++i) {
        Vec e = Vec::Zero(dim);
        e(i) = 1.0;
        const double jp = J(e), jn = J(-e);
        plus[static_cast<std::size_t>(i)] = jp;
        qm.gradient0(i) = 0.5 * (jp - jn);
        qm.hessian(i, i) = jp + jn - 2.0 * qm.value0;
    }
    for (Eigen::Index i = 0; i < dim; ++i) {
        for (Eigen::Index j = i + 1; j < dim; ++j) {
            Vec e = Vec::Zero(dim);
            e(i) = 1.0;
            e(j) = 1.0;
            const double h = J(e) - plus[static_cast<std::size_t>(i)] -
                             plus[static_cast<std::size_t>(j)] + qm.value0;
            qm.hessian(i, j) = h;
            qm.hessian(j, i) = h;
        }
    }
    return qm;
}

std::int64_t control_count(const TreeTopology& topo) {
    std::int64_t c = 0;
    for (int k = 0; k < topo.horizon(); ++k) c += topo.level_size(k);
    return c;
}

Mat M_inverse(const ForwardLqData& data) {
    return data.M.llt().solve(Mat::Identity(data.n, data.n));
}

ControlProcess unpack_control(const TreeTopology& topo, int m, const Vec& flat,
                              Eigen::Index offset) {
    ControlProcess u(topo, m, 0, topo.horizon() - 1);
    Eigen::Index at = offset;
    for (int k = 0; k < topo.horizon(); ++k) {
        Mat& f = u.field(k);
        for (std::int64_t v = 0; v < f.cols(); ++v) {
            f.col(v) = flat.segment(at, m);
            at += m;
        }
    }
    return u;
}

}  // namespace

namespace {

void require_shape(const std::vector<NodeIndexed<Mat>>& seq, Eigen::Index rows,
                   Eigen::Index cols, const char* what) {
    for (const auto& step : seq)
        for (std::size_t i = 0; i < step.stored(); ++i) {
            const Mat& m = step.at(static_cast<std::int64_t>(i));
            if (m.rows() != rows || m.cols() != cols)
                throw ShapeError(std::string(what) + " has the wrong shape");
        }
}

void require_shape(const std::vector<NodeIndexed<Vec>>& seq, Eigen::Index size,
                   const char* what) {
    for (const auto& step : seq)
        for (std::size_t i = 0; i < step.stored(); ++i)
            if (step.at(static_cast<std::int64_t>(i)).size() != size)
                throw ShapeError(std::string(what) + " has the wrong size");
}

}  // namespace

void ForwardLqData::validate() const {
    if (n < 1 || m < 1) throw UsageError("lq dimensions must be >= 1");
    const int N = topology.horizon();
    if (static_cast<int>(A.size()) != N || static_cast<int>(B.size()) != N ||
        static_cast<int>(C.size()) != N || static_cast<int>(D.size()) != N ||
        static_cast<int>(b0.size()) != N || static_cast<int>(sigma0.size()) != N ||
        static_cast<int>(Q.size()) != N || static_cast<int>(R.size()) != N)
        throw ShapeError("forward lq data needs one block per step");
    require_shape(A, n, n, "A");
    require_shape(B, n, m, "B");
    require_shape(C, n, n, "C");
    require_shape(D, n, m, "D");
    require_shape(b0, n, "b");
    require_shape(sigma0, n, "sigma");
    require_shape(Q, n, n, "Q");
    require_shape(R, m, m, "R");
    if (M.rows() != n || M.cols() != n) throw ShapeError("M has the wrong shape");
    for (std::size_t u = 0; u < G.stored(); ++u)
        if (G.at(static_cast<std::int64_t>(u)).rows() != n ||
            G.at(static_cast<std::int64_t>(u)).cols() != n)
            throw ShapeError("G has the wrong shape");
    require_symmetric(M, "M");
    if (min_eigenvalue(M) <= 0.0) throw UsageError("M must be positive definite");
    for (std::size_t u = 0; u < G.stored(); ++u) {
        const Mat& g = G.at(static_cast<std::int64_t>(u));
        require_symmetric(g, "G");
        if (min_eigenvalue(g) < -1e-12) throw UsageError("G must be nonnegative definite");
    }
    for_each_item(Q, [](const Mat& q) {
        require_symmetric(q, "Q");
        if (min_eigenvalue(q) < -1e-12) throw UsageError("Q must be nonnegative definite");
    });
    const double floor = r_floor;
    for_each_item(R, [floor](const Mat& r) {
        require_symmetric(r, "R");
        if (min_eigenvalue(r) < floor - 1e-12)
            throw UsageError("R must dominate the recorded floor");
    });
}

void BackwardLqData::validate() const {
    if (n < 1 || m < 1) throw UsageError("lq dimensions must be >= 1");
    const int N = topology.horizon();
    if (static_cast<int>(A.size()) != N || static_cast<int>(B.size()) != N ||
        static_cast<int>(C.size()) != N || static_cast<int>(alpha0.size()) != N ||
        static_cast<int>(Q.size()) != N || static_cast<int>(L.size()) != N ||
        static_cast<int>(R.size()) != N)
        throw ShapeError("backward lq data needs one block per step");
    if (eta.rows() != n || eta.cols() != topology.level_size(N))
        throw ShapeError("terminal state field has wrong shape");
    require_shape(A, n, n, "A");
    require_shape(B, n, n, "B");
    require_shape(C, n, m, "C");
    require_shape(alpha0, n, "alpha");
    require_shape(Q, n, n, "Q");
    require_shape(L, n, n, "L");
    require_shape(R, m, m, "R");
    if (M.rows() != n || M.cols() != n) throw ShapeError("M has the wrong shape");
    require_symmetric(M, "M");
    if (min_eigenvalue(M) <= 0.0) throw UsageError("M must be positive definite");
    for_each_item(Q, [](const Mat& q) {
        require_symmetric(q, "Q");
        if (min_eigenvalue(q) < -1e-12) throw UsageError("Q must be nonnegative definite");
    });
    for_each_item(L, [](const Mat& l) {
        require_symmetric(l, "L");
        if (min_eigenvalue(l) < -1e-12) throw UsageError("L must be nonnegative definite");
    });
    const double floor = r_floor;
    for_each_item(R, [floor](const Mat& r) {
        require_symmetric(r, "R");
        if (min_eigenvalue(r) < floor - 1e-12)
            throw UsageError("R must dominate the recorded floor");
    });
}

LqAssembly assemble_flq(const ForwardLqData& data) {
    data.validate();
    const int n = data.n, m = data.m, N = data.topology.horizon();

    LqAssembly out;
    CoefficientSet& co = out.coefficients;
    DominationData& dom = out.domination;
    co.state_dim = n;

    co.initial.a = -M_inverse(data);
    co.initial.c = Vec::Zero(n);
    {
        std::vector<AffineVecMap> phis;
        phis.reserve(data.G.stored());
        for (std::size_t u = 0; u < data.G.stored(); ++u)
            phis.push_back({data.G.at(static_cast<std::int64_t>(u)), Vec::Zero(n)});
        co.terminal = phis.size() == 1 ? NodeIndexed<AffineVecMap>(phis[0])
                                       : NodeIndexed<AffineVecMap>(std::move(phis));
    }

    dom.mu = 1.0;
    dom.nu = 0.0;
    dom.M = principal_sqrt(M_inverse(data));
    dom.G = NodeIndexed<Mat>(Mat::Zero(n, n));

    co.steps.reserve(static_cast<std::size_t>(N));
    dom.steps.reserve(static_cast<std::size_t>(N));
    for (int k = 0; k < N; ++k) {
        const std::size_t ks = static_cast<std::size_t>(k);
        const std::size_t count =
            std::max({data.A[ks].stored(), data.B[ks].stored(), data.C[ks].stored(),
                      data.D[ks].stored(), data.b0[ks].stored(), data.sigma0[ks].stored(),
                      data.Q[ks].stored(), data.R[ks].stored()});
        std::vector<AffineThetaMap> fs, bs, ss;
        std::vector<Mat> bdom, cdom;
        for (std::size_t vi = 0; vi < count; ++vi) {
            const auto v = static_cast<std::int64_t>(vi);
            const Mat& A = data.A[ks].at(v);
            const Mat& B = data.B[ks].at(v);
            const Mat& C = data.C[ks].at(v);
            const Mat& D = data.D[ks].at(v);
            const Mat& Q = data.Q[ks].at(v);
            const Mat& R = data.R[ks].at(v);
            const Mat Rinv = R.llt().solve(Mat::Identity(m, m));
            const Mat Risq = principal_sqrt(Rinv);

            AffineThetaMap b{A, -B * Rinv * B.transpose(), -B * Rinv * D.transpose(),
                             data.b0[ks].at(v)};
            AffineThetaMap s{C, -D * Rinv * B.transpose(), -D * Rinv * D.transpose(),
                             data.sigma0[ks].at(v)};
            AffineThetaMap f{-Q, -A.transpose(), -C.transpose(), Vec::Zero(n)};
            fs.push_back(std::move(f));
            bs.push_back(std::move(b));
            ss.push_back(std::move(s));
            bdom.push_back(Risq * B.transpose());
            cdom.push_back(Risq * D.transpose());
        }
        CoefficientSet::StepBlock blk;
        blk.driver = count == 1 ? NodeIndexed<AffineThetaMap>(fs[0])
                                : NodeIndexed<AffineThetaMap>(std::move(fs));
        blk.drift = count == 1 ? NodeIndexed<AffineThetaMap>(bs[0])
                               : NodeIndexed<AffineThetaMap>(std::move(bs));
        blk.diffusion = count == 1 ? NodeIndexed<AffineThetaMap>(ss[0])
                                   : NodeIndexed<AffineThetaMap>(std::move(ss));
        co.steps.push_back(std::move(blk));

        DominationData::StepMats dm;
        dm.A = NodeIndexed<Mat>(Mat::Zero(m, n));
        dm.B = count == 1 ? NodeIndexed<Mat>(bdom[0]) : NodeIndexed<Mat>(std::move(bdom));
        dm.C = count == 1 ? NodeIndexed<Mat>(cdom[0]) : NodeIndexed<Mat>(std::move(cdom));
        dom.steps.push_back(std::move(dm));
    }

    out.report = check_conditions(co, dom, data.topology, 4000, 0x5151u, 1e-10);
    return out;
}

double cost_flq(const ForwardLqData& data, const Vec& xi, const ControlProcess& u) {
    const TreeTopology& topo = data.topology;
    const int N = topo.horizon();
    if (xi.size() != data.n) throw ShapeError("initial state has wrong dimension");
    if (u.dim() != data.m || u.first_time() != 0 || u.last_time() != N - 1)
        throw ShapeError("control process has wrong shape");

    SdeProblem prob;
    prob.topology = topo;
    prob.dim = data.n;
    prob.initial = xi;
    prob.drift = [&data, &u](int k, NodeId v, const Vec& x) -> Vec {
        const std::size_t ks = static_cast<std::size_t>(k);
        return data.A[ks].at(v.index) * x + data.B[ks].at(v.index) * u.field(k).col(v.index) +
               data.b0[ks].at(v.index);
    };
    prob.diffusion = [&data, &u](int k, NodeId v, const Vec& x) -> Vec {
        const std::size_t ks = static_cast<std::size_t>(k);
        return data.C[ks].at(v.index) * x + data.D[ks].at(v.index) * u.field(k).col(v.index) +
               data.sigma0[ks].at(v.index);
    };
    const AdaptedProcess x = solve_sde(prob);

    double j = xi.dot(data.M * xi);
    {
        const Mat& xN = x.field(N);
        double acc = 0.0;
        for (std::int64_t vv = 0; vv < xN.cols(); ++vv)
            acc += topo.node_prob(NodeId{N, vv}) * xN.col(vv).dot(data.G.at(vv) * xN.col(vv));
        j += acc;
    }
    for (int k = 0; k < N; ++k) {
        const std::size_t ks = static_cast<std::size_t>(k);
        double acc = 0.0;
        for (std::int64_t vv = 0; vv < topo.level_size(k); ++vv) {
            const double p = topo.node_prob(NodeId{k, vv});
            const Vec xv = x.field(k).col(vv);
            const Vec uv = u.field(k).col(vv);
            acc += p * (xv.dot(data.Q[ks].at(vv) * xv) + uv.dot(data.R[ks].at(vv) * uv));
        }
        j += acc;
    }
    return 0.5 * j;
}

FlqSolution solve_flq(const ForwardLqData& data, const ContinuationOptions& options) {
    const TreeTopology& topo = data.topology;
    const int N = topo.horizon();
    const LqAssembly asmb = assemble_flq(data);
    const PerturbationData pert = PerturbationData::zero(topo, data.n);

    ContinuationResult res = solve_fbsde(asmb.coefficients, asmb.domination, pert, 1.0, options,
                                         topo);
    const SolutionPair direct = solve_linear_direct(asmb.coefficients, pert, topo);
    const double dn = std::sqrt(pair_diff_n2_sq(res.solution, direct, topo));
    const double ref = std::max(1.0, std::sqrt(pair_n2_sq(direct, topo)));
    if (dn / ref > 1e-8)
        throw InternalError("continuation and stacked direct solves disagree on the Hamiltonian");

    FlqSolution sol;
    sol.diagnostics = res.diagnostics;
    sol.x = res.solution.x;
    sol.y = res.solution.y;
    sol.xi = -M_inverse(data) * sol.y.field(0).col(0);
    sol.u = ControlProcess(topo, data.m, 0, N - 1);
    sol.stationarity = 0.0;
    for (int k = 0; k < N; ++k) {
        const std::size_t ks = static_cast<std::size_t>(k);
        const CondPair cp = cond_prev(sol.y.field(k + 1), k + 1, topo);
        for (std::int64_t v = 0; v < topo.level_size(k); ++v) {
            const Mat& B = data.B[ks].at(v);
            const Mat& D = data.D[ks].at(v);
            const Mat& R = data.R[ks].at(v);
            const Vec lead = B.transpose() * cp.mean.col(v) + D.transpose() * cp.weighted.col(v);
            const Vec uv = -R.llt().solve(lead);
            sol.u.field(k).col(v) = uv;
            sol.stationarity = std::max(sol.stationarity, (lead + R * uv).norm());
        }
    }
    sol.cost = cost_flq(data, sol.xi, sol.u);
    return sol;
}

FlqOracle oracle_flq(const ForwardLqData& data) {
    data.validate();
    const TreeTopology& topo = data.topology;
    const Eigen::Index dim = data.n + data.m * control_count(topo);

    auto evaluate = [&](const Vec& d) -> double {
        const Vec xi = d.head(data.n);
        const ControlProcess u = unpack_control(topo, data.m, d, data.n);
        return cost_flq(data, xi, u);
    };

    const QuadraticModel qm = fit_quadratic(dim, evaluate);
    Eigen::LDLT<Mat> ldlt(qm.hessian);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
        throw SolvabilityError("criterion is not strictly convex in the stacked decisions");
    const Vec dstar = ldlt.solve(-qm.gradient0);

    FlqOracle out;
    out.gradient_norm = (qm.hessian * dstar + qm.gradient0).norm();
    if (out.gradient_norm > 1e-10)
        throw InternalError("oracle normal equations left a residual gradient");
    out.xi = dstar.head(data.n);
    out.u = unpack_control(topo, data.m, dstar, data.n);
    out.cost = evaluate(dstar);

    Rng rng(0xfeedu);
    for (int t = 0; t < 100; ++t) {
        const Vec d = dstar + rng.gauss_vector(dim) * (0.1 + rng.uniform());
        if (evaluate(d) < out.cost - 1e-10)
            throw InternalError("oracle minimizer beaten by a random perturbation");
    }
    return out;
}

LqAssembly assemble_blq(const BackwardLqData& data) {
    data.validate();
    const int n = data.n, m = data.m, N = data.topology.horizon();

    LqAssembly out;
    CoefficientSet& co = out.coefficients;
    DominationData& dom = out.domination;
    co.state_dim = n;

    co.initial.a = -data.M;
    co.initial.c = Vec::Zero(n);
    {
        std::vector<AffineVecMap> phis;
        phis.reserve(static_cast<std::size_t>(data.eta.cols()));
        for (Eigen::Index u = 0; u < data.eta.cols(); ++u)
            phis.push_back({Mat::Zero(n, n), data.eta.col(u)});
        co.terminal = NodeIndexed<AffineVecMap>(std::move(phis));
    }

    dom.mu = 1.0;
    dom.nu = 0.0;
    dom.M = principal_sqrt(data.M);
    dom.G = NodeIndexed<Mat>(Mat::Zero(n, n));

    co.steps.reserve(static_cast<std::size_t>(N));
    dom.steps.reserve(static_cast<std::size_t>(N));
    for (int k = 0; k < N; ++k) {
        const std::size_t ks = static_cast<std::size_t>(k);
        const std::size_t count =
            std::max({data.A[ks].stored(), data.B[ks].stored(), data.C[ks].stored(),
                      data.alpha0[ks].stored(), data.Q[ks].stored(), data.L[ks].stored(),
                      data.R[ks].stored()});
        std::vector<AffineThetaMap> fs, bs, ss;
        std::vector<Mat> bdom, cdom;
        for (std::size_t vi = 0; vi < count; ++vi) {
            const auto v = static_cast<std::int64_t>(vi);
            const Mat& A = data.A[ks].at(v);
            const Mat& B = data.B[ks].at(v);
            const Mat& C = data.C[ks].at(v);
            const Mat& Q = data.Q[ks].at(v);
            const Mat& L = data.L[ks].at(v);
            const Mat& R = data.R[ks].at(v);
            const Mat Rinv = R.llt().solve(Mat::Identity(m, m));

            // forward part of the Hamiltonian system
            AffineThetaMap b{A.transpose(), -Q, Mat::Zero(n, n), Vec::Zero(n)};
            AffineThetaMap s{B.transpose(), Mat::Zero(n, n), -L, Vec::Zero(n)};
            // backward part: y = A y' + B z' + C R^{-1} C^T x + alpha
            AffineThetaMap f{-C * Rinv * C.transpose(), -A, -B, -data.alpha0[ks].at(v)};
            fs.push_back(std::move(f));
            bs.push_back(std::move(b));
            ss.push_back(std::move(s));

            Mat bd = Mat::Zero(2 * n, n), cd = Mat::Zero(2 * n, n);
            bd.topRows(n) = principal_sqrt(Q);
            cd.bottomRows(n) = principal_sqrt(L);
            bdom.push_back(std::move(bd));
            cdom.push_back(std::move(cd));
        }
        CoefficientSet::StepBlock blk;
        blk.driver = count == 1 ? NodeIndexed<AffineThetaMap>(fs[0])
                                : NodeIndexed<AffineThetaMap>(std::move(fs));
        blk.drift = count == 1 ? NodeIndexed<AffineThetaMap>(bs[0])
                               : NodeIndexed<AffineThetaMap>(std::move(bs));
        blk.diffusion = count == 1 ? NodeIndexed<AffineThetaMap>(ss[0])
                                   : NodeIndexed<AffineThetaMap>(std::move(ss));
        co.steps.push_back(std::move(blk));

        DominationData::StepMats dm;
        dm.A = NodeIndexed<Mat>(Mat::Zero(2 * n, n));
        dm.B = count == 1 ? NodeIndexed<Mat>(bdom[0]) : NodeIndexed<Mat>(std::move(bdom));
        dm.C = count == 1 ? NodeIndexed<Mat>(cdom[0]) : NodeIndexed<Mat>(std::move(cdom));
        dom.steps.push_back(std::move(dm));
    }

    out.report = check_conditions(co, dom, data.topology, 4000, 0x5152u, 1e-10);
    return out;
}

double cost_blq(const BackwardLqData& data, const ControlProcess& v) {
    const TreeTopology& topo = data.topology;
    const int N = topo.horizon();
    if (v.dim() != data.m || v.first_time() != 0 || v.last_time() != N - 1)
        throw ShapeError("control process has wrong shape");

    BsdeProblem prob;
    prob.topology = topo;
    prob.dim = data.n;
    prob.terminal = data.eta;
    prob.driver = [&data, &v](int k, NodeId node, const Vec& yp, const Vec& zp) -> Vec {
        const std::size_t ks = static_cast<std::size_t>(k);
        return data.A[ks].at(node.index) * yp + data.B[ks].at(node.index) * zp +
               data.C[ks].at(node.index) * v.field(k).col(node.index) +
               data.alpha0[ks].at(node.index);
    };
    const AdaptedProcess y = solve_bsde(prob);

    const Vec y0 = y.field(0).col(0);
    double j = y0.dot(data.M * y0);
    for (int k = 0; k < N; ++k) {
        const std::size_t ks = static_cast<std::size_t>(k);
        const CondPair cp = cond_prev(y.field(k + 1), k + 1, topo);
        double acc = 0.0;
        for (std::int64_t vv = 0; vv < topo.level_size(k); ++vv) {
            const double p = topo.node_prob(NodeId{k, vv});
            const Vec yp = cp.mean.col(vv), zp = cp.weighted.col(vv);
            const Vec uv = v.field(k).col(vv);
            acc += p * (yp.dot(data.Q[ks].at(vv) * yp) + zp.dot(data.L[ks].at(vv) * zp) +
                        uv.dot(data.R[ks].at(vv) * uv));
        }
        j += acc;
    }
    return 0.5 * j;
}

BlqSolution solve_blq(const BackwardLqData& data, const ContinuationOptions& options) {
    const TreeTopology& topo = data.topology;
    const int N = topo.horizon();
    const LqAssembly asmb = assemble_blq(data);
    const PerturbationData pert = PerturbationData::zero(topo, data.n);

    ContinuationResult res = solve_fbsde(asmb.coefficients, asmb.domination, pert, 1.0, options,
                                         topo);
    const SolutionPair direct = solve_linear_direct(asmb.coefficients, pert, topo);
    const double dn = std::sqrt(pair_diff_n2_sq(res.solution, direct, topo));
    const double ref = std::max(1.0, std::sqrt(pair_n2_sq(direct, topo)));
    if (dn / ref > 1e-8)
        throw InternalError("continuation and stacked direct solves disagree on the Hamiltonian");

    BlqSolution sol;
    sol.diagnostics = res.diagnostics;
    sol.x = res.solution.x;
    sol.y = res.solution.y;
    sol.v = ControlProcess(topo, data.m, 0, N - 1);
    sol.stationarity = 0.0;
    for (int k = 0; k < N; ++k) {
        const std::size_t ks = static_cast<std::size_t>(k);
        for (std::int64_t vv = 0; vv < topo.level_size(k); ++vv) {
            const Mat& C = data.C[ks].at(vv);
            const Mat& R = data.R[ks].at(vv);
            const Vec lead = C.transpose() * sol.x.field(k).col(vv);
            const Vec value = R.llt().solve(lead);
            sol.v.field(k).col(vv) = value;
            sol.stationarity = std::max(sol.stationarity, (lead - R * value).norm());
        }
    }
    sol.cost = cost_blq(data, sol.v);
    return sol;
}

BlqOracle oracle_blq(const BackwardLqData& data) {
    data.validate();
    const TreeTopology& topo = data.topology;
    const Eigen::Index dim = data.m * control_count(topo);

    auto evaluate = [&](const Vec& d) -> double {
        return cost_blq(data, unpack_control(topo, data.m, d, 0));
    };

    const QuadraticModel qm = fit_quadratic(dim, evaluate);
    Eigen::LDLT<Mat> ldlt(qm.hessian);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
        throw SolvabilityError("criterion is not strictly convex in the stacked decisions");
    const Vec dstar = ldlt.solve(-qm.gradient0);

    BlqOracle out;
    out.gradient_norm = (qm.hessian * dstar + qm.gradient0).norm();
    if (out.gradient_norm > 1e-10)
        throw InternalError("oracle normal equations left a residual gradient");
    out.v = unpack_control(topo, data.m, dstar, 0);
    out.cost = evaluate(dstar);

    Rng rng(0xfeedu);
    for (int t = 0; t < 100; ++t) {
        const Vec d = dstar + rng.gauss_vector(dim) * (0.1 + rng.uniform());
        if (evaluate(d) < out.cost - 1e-10)
            throw InternalError("oracle minimizer beaten by a random perturbation");
    }
    return out;
}

InsurancePath insurance_demo(const TreeTopology& topology, const InsuranceParams& params,
                             const ControlProcess& u) {
    const int N = topology.horizon();
    const int q = topology.branching();
    const std::size_t steps = static_cast<std::size_t>(N);
    if (params.rate.size() != steps || params.premium.size() != steps ||
        params.vol.size() != steps || params.growth.size() != steps ||
        params.payout.size() != steps)
        throw ShapeError("insurance parameters need one entry per step");
    for (std::size_t k = 0; k < steps; ++k)
        if (!(params.vol[k] > 0.0))
            throw UsageError("volatility must be positive at step " + std::to_string(k));
    if (u.dim() != 1 || u.first_time() != 0 || u.last_time() != N - 1)
        throw ShapeError("investment process has wrong shape");

    InsurancePath out;
    out.wealth = AdaptedProcess(topology, 1, 0, N);
    out.wealth.field(0)(0, 0) = params.initial_wealth;
    for (int k = 0; k < N; ++k) {
        const std::size_t ks = static_cast<std::size_t>(k);
        const Mat& cur = out.wealth.field(k);
        Mat& nxt = out.wealth.field(k + 1);
        for (std::int64_t v = 0; v < cur.cols(); ++v) {
            const double base = (1.0 + params.rate[ks]) * cur(0, v) +
                                params.premium[ks] * u.field(k)(0, v);
            for (int j = 0; j < q; ++j)
                nxt(0, v * q + j) =
                    base + params.vol[ks] * u.field(k)(0, v) * topology.shock(j);
        }
    }

    // liability recursion conditions on F_k, so y_k lives on level min(k+1, N)
    out.liability.assign(steps + 1, Mat());
    out.liability[steps] = Mat::Zero(1, topology.level_size(N));
    for (int k = N - 1; k >= 0; --k) {
        const std::size_t ks = static_cast<std::size_t>(k);
        const int lvl = InsurancePath::liability_level(k, N);
        const int next_lvl = InsurancePath::liability_level(k + 1, N);
        const Mat& next = out.liability[ks + 1];
        Mat cur(1, topology.level_size(lvl));
        for (std::int64_t v = 0; v < cur.cols(); ++v) {
            double expect = 0.0;
            if (next_lvl == lvl) {
                expect = next(0, v);
            } else {
                for (int j = 0; j < q; ++j)
                    expect += topology.branch_prob(j) * next(0, v * q + j);
            }
            const std::int64_t anc = v / q;  // level-k ancestor of the level-(k+1) node
            cur(0, v) = (1.0 + params.growth[ks]) * expect -
                        params.payout[ks] * out.wealth.field(k)(0, anc);
        }
        out.liability[ks] = std::move(cur);
    }

    // recursion defects, recomputed from the stored fields
    double res = 0.0;
    for (int k = 0; k < N; ++k) {
        const std::size_t ks = static_cast<std::size_t>(k);
        for (std::int64_t v = 0; v < topology.level_size(k); ++v) {
            for (int j = 0; j < q; ++j) {
                const double pred = (1.0 + params.rate[ks]) * out.wealth.field(k)(0, v) +
                                    params.premium[ks] * u.field(k)(0, v) +
                                    params.vol[ks] * u.field(k)(0, v) * topology.shock(j);
                res = std::max(res, std::abs(out.wealth.field(k + 1)(0, v * q + j) - pred));
            }
        }
        const int lvl = InsurancePath::liability_level(k, N);
        const int next_lvl = InsurancePath::liability_level(k + 1, N);
        for (std::int64_t v = 0; v < topology.level_size(lvl); ++v) {
            double expect = 0.0;
            if (next_lvl == lvl) {
                expect = out.liability[ks + 1](0, v);
            } else {
                for (int j = 0; j < q; ++j)
                    expect += topology.branch_prob(j) * out.liability[ks + 1](0, v * q + j);
            }
            const double pred = (1.0 + params.growth[ks]) * expect -
                                params.payout[ks] * out.wealth.field(k)(0, v / q);
            res = std::max(res, std::abs(out.liability[ks](0, v) - pred));
        }
    }
    out.residual = res;
    return out;
}

}  // namespace sdetree
