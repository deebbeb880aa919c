#include "sdetree/continuation.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <string>

#include "sdetree/rng.hpp"

namespace sdetree {

namespace {

void check_perturbation(const PerturbationData& p, int n, const TreeTopology& topo) {
    const int N = topo.horizon();
    if (p.xi.size() != n) throw ShapeError("perturbation xi has wrong dimension");
    if (p.eta.rows() != n || p.eta.cols() != topo.level_size(N))
        throw ShapeError("perturbation eta has wrong shape");
    for (const AdaptedProcess* proc : {&p.phi, &p.psi, &p.gamma}) {
        if (proc->dim() != n || proc->first_time() != 0 || proc->last_time() != N - 1)
            throw ShapeError("perturbation process has wrong shape");
    }
}

void check_pair(const SolutionPair& s, int n, const TreeTopology& topo) {
    for (const AdaptedProcess* proc : {&s.x, &s.y}) {
        if (proc->dim() != n || proc->first_time() != 0 || proc->last_time() != topo.horizon())
            throw ShapeError("solution pair has wrong shape");
    }
}

}  // namespace

PerturbationData PerturbationData::zero(const TreeTopology& topology, int n) {
    PerturbationData p;
    p.xi = Vec::Zero(n);
    p.eta = Mat::Zero(n, topology.level_size(topology.horizon()));
    p.phi = AdaptedProcess(topology, n, 0, topology.horizon() - 1);
    p.psi = AdaptedProcess(topology, n, 0, topology.horizon() - 1);
    p.gamma = AdaptedProcess(topology, n, 0, topology.horizon() - 1);
    return p;
}

PerturbationData PerturbationData::random(const TreeTopology& topology, int n,
                                          std::uint64_t seed, double scale) {
    PerturbationData p = zero(topology, n);
    Rng rng(seed);
    p.xi = scale * rng.gauss_vector(n);
    for (Eigen::Index c = 0; c < p.eta.cols(); ++c) p.eta.col(c) = scale * rng.gauss_vector(n);
    for (AdaptedProcess* proc : {&p.phi, &p.psi, &p.gamma}) {
        for (int k = 0; k <= proc->last_time(); ++k) {
            Mat& f = proc->field(k);
            for (Eigen::Index c = 0; c < f.cols(); ++c) f.col(c) = scale * rng.gauss_vector(n);
        }
    }
    return p;
}

double aggregate(const PerturbationData& p, NormKind kind, const TreeTopology& topology) {
    switch (kind) {
        case NormKind::ScriptN2:
            return n2_sq(p.phi, topology) + n2_sq(p.psi, topology) + n2_sq(p.gamma, topology);
        case NormKind::H:
            return p.xi.squaredNorm() +
                   expectation_sq(p.eta, topology.horizon(), topology) +
                   aggregate(p, NormKind::ScriptN2, topology);
        default:
            throw UsageError("N2 does not apply to perturbation data");
    }
}

double pair_n2_sq(const SolutionPair& s, const TreeTopology& topology) {
    return n2_sq(s.x, topology) + n2_sq(s.y, topology);
}

double pair_diff_n2_sq(const SolutionPair& a, const SolutionPair& b,
                       const TreeTopology& topology) {
    double acc = 0.0;
    for (int k = 0; k <= topology.horizon(); ++k) {
        acc += expectation_sq(a.x.field(k) - b.x.field(k), k, topology);
        acc += expectation_sq(a.y.field(k) - b.y.field(k), k, topology);
    }
    return acc;
}

void ContinuationOptions::validate() const {
    if (!(tolerance > 0.0)) throw UsageError("tolerance must be positive");
    if (max_iterations < 1) throw UsageError("iteration budget must be >= 1");
    if (!(delta_min > 0.0 && delta_min <= delta_init && delta_init <= 1.0))
        throw UsageError("need 0 < delta_min <= delta_init <= 1");
    if (max_depth < 1) throw UsageError("max_depth must be >= 1");
    if (max_base_solves < 1) throw UsageError("max_base_solves must be >= 1");
}

SolutionPair solve_alpha0(const CoefficientSet& coeffs, const DominationData& dom,
                          const PerturbationData& pert, const TreeTopology& topology) {
    dom.validate();
    const int n = coeffs.state_dim;
    const int N = topology.horizon();
    const int q = topology.branching();
    check_perturbation(pert, n, topology);

    SolutionPair s{AdaptedProcess(topology, n, 0, N), AdaptedProcess(topology, n, 0, N)};

    if (dom.case1()) {
        // backward part is explicit: y_k = -phi_k, y_N = eta
        s.y.field(N) = pert.eta;
        for (int k = 0; k < N; ++k) s.y.field(k) = -pert.phi.field(k);

        const Mat mtm = dom.mu * dom.M.transpose() * dom.M;
        s.x.field(0).col(0) = -mtm * s.y.field(0).col(0) + pert.xi;
        for (int k = 0; k < N; ++k) {
            const CondPair cp = cond_prev(s.y.field(k + 1), k + 1, topology);
            const Mat& cur = s.x.field(k);
            Mat& nxt = s.x.field(k + 1);
            const auto& dm = dom.steps[static_cast<std::size_t>(k)];
            for (std::int64_t v = 0; v < cur.cols(); ++v) {
                const Mat& B = dm.B.at(v);
                const Mat& C = dm.C.at(v);
                const Vec qv = B * cp.mean.col(v) + C * cp.weighted.col(v);
                const Vec drift = -dom.mu * B.transpose() * qv + pert.psi.field(k).col(v);
                const Vec diff = -dom.mu * C.transpose() * qv + pert.gamma.field(k).col(v);
                for (int j = 0; j < q; ++j)
                    nxt.col(v * q + j) = drift + topology.shock(j) * diff;
            }
        }
    } else {
        // forward part is explicit: x_{k+1} = psi_k + gamma_k w_k
        s.x.field(0).col(0) = pert.xi;
        for (int k = 0; k < N; ++k) {
            Mat& nxt = s.x.field(k + 1);
            for (std::int64_t v = 0; v < topology.level_size(k); ++v)
                for (int j = 0; j < q; ++j)
                    nxt.col(v * q + j) =
                        pert.psi.field(k).col(v) + topology.shock(j) * pert.gamma.field(k).col(v);
        }
        Mat& yN = s.y.field(N);
        for (std::int64_t u = 0; u < yN.cols(); ++u) {
            const Mat& G = dom.G.at(u);
            yN.col(u) = dom.nu * G.transpose() * (G * s.x.field(N).col(u)) + pert.eta.col(u);
        }
        for (int k = 0; k < N; ++k) {
            Mat& yk = s.y.field(k);
            const auto& dm = dom.steps[static_cast<std::size_t>(k)];
            for (std::int64_t v = 0; v < yk.cols(); ++v) {
                const Mat& A = dm.A.at(v);
                yk.col(v) = dom.nu * A.transpose() * (A * s.x.field(k).col(v)) -
                            pert.phi.field(k).col(v);
            }
        }
    }
    return s;
}

PerturbationData tilde_perturbation(const CoefficientSet& coeffs, const DominationData& dom,
                                    double delta, const PerturbationData& pert,
                                    const SolutionPair& guess, const TreeTopology& topology) {
    const int n = coeffs.state_dim;
    const int N = topology.horizon();
    check_perturbation(pert, n, topology);
    check_pair(guess, n, topology);

    PerturbationData out = pert;
    const Vec y0 = guess.y.field(0).col(0);
    out.xi += delta * coeffs.initial_map(y0) + delta * dom.mu * dom.M.transpose() * (dom.M * y0);

    for (std::int64_t u = 0; u < out.eta.cols(); ++u) {
        const Vec xN = guess.x.field(N).col(u);
        const Mat& G = dom.G.at(u);
        out.eta.col(u) += delta * coeffs.terminal_map(NodeId{N, u}, xN) -
                          delta * dom.nu * G.transpose() * (G * xN);
    }

    for (int k = 0; k < N; ++k) {
        const CondPair cp = cond_prev(guess.y.field(k + 1), k + 1, topology);
        const Mat& xk = guess.x.field(k);
        for (std::int64_t v = 0; v < xk.cols(); ++v) {
            const NodeId node{k, v};
            const Vec x = xk.col(v), yp = cp.mean.col(v), zp = cp.weighted.col(v);
            const auto [pv, qv] = pq_maps(dom, k, node, x, yp, zp);
            const auto& dm = dom.steps[static_cast<std::size_t>(k)];
            out.psi.field(k).col(v) += delta * coeffs.drift(k, node, x, yp, zp) +
                                       delta * dom.mu * dm.B.at(v).transpose() * qv;
            out.gamma.field(k).col(v) += delta * coeffs.diffusion(k, node, x, yp, zp) +
                                         delta * dom.mu * dm.C.at(v).transpose() * qv;
            out.phi.field(k).col(v) += delta * coeffs.driver(k, node, x, yp, zp) +
                                       delta * dom.nu * dm.A.at(v).transpose() * pv;
        }
    }
    return out;
}

ResidualRecord residual(const CoefficientSet& coeffs, const PerturbationData& pert,
                        const SolutionPair& candidate, const TreeTopology& topology) {
    const int n = coeffs.state_dim;
    const int N = topology.horizon();
    const int q = topology.branching();
    check_perturbation(pert, n, topology);
    check_pair(candidate, n, topology);

    ResidualRecord rec;
    for (int k = 0; k < N; ++k) {
        const CondPair cp = cond_prev(candidate.y.field(k + 1), k + 1, topology);
        const Mat& xk = candidate.x.field(k);
        for (std::int64_t v = 0; v < xk.cols(); ++v) {
            const NodeId node{k, v};
            const Vec x = xk.col(v), yp = cp.mean.col(v), zp = cp.weighted.col(v);
            const Vec drift = coeffs.drift(k, node, x, yp, zp) + pert.psi.field(k).col(v);
            const Vec diff = coeffs.diffusion(k, node, x, yp, zp) + pert.gamma.field(k).col(v);
            for (int j = 0; j < q; ++j) {
                const double d = (candidate.x.field(k + 1).col(v * q + j) - drift -
                                  topology.shock(j) * diff)
                                     .norm();
                rec.forward = std::max(rec.forward, d);
            }
            const double db = (candidate.y.field(k).col(v) + coeffs.driver(k, node, x, yp, zp) +
                               pert.phi.field(k).col(v))
                                  .norm();
            rec.backward = std::max(rec.backward, db);
        }
    }
    rec.initial = (candidate.x.field(0).col(0) -
                   coeffs.initial_map(candidate.y.field(0).col(0)) - pert.xi)
                      .norm();
    for (std::int64_t u = 0; u < topology.level_size(N); ++u) {
        const double dt = (candidate.y.field(N).col(u) -
                           coeffs.terminal_map(NodeId{N, u}, candidate.x.field(N).col(u)) -
                           pert.eta.col(u))
                              .norm();
        rec.terminal = std::max(rec.terminal, dt);
    }
    rec.overall = std::max({rec.forward, rec.backward, rec.initial, rec.terminal});
    return rec;
}

namespace {

/// Recursive ladder: level 0 is the decoupled direct solve; level j is a
/// Picard iteration over level j-1 with the tilde-shifted perturbation.
/// Each inner level converges a constant factor tighter than its caller, so
/// the caller's iterate differences stay above the inner noise floor.
struct Ladder {
    const CoefficientSet& coeffs;
    const DominationData& dom;
    const TreeTopology& topo;
    const ContinuationOptions& opt;
    std::vector<double> alphas{0.0};
    SolveDiagnostics* diag;

    static double inner_tol(double tol) { return std::max(0.2 * tol, 1e-13); }

    SolutionPair solve_level(std::size_t level, const PerturbationData& p,
                             const SolutionPair* warm, double tol) {
        if (level == 0) {
            if (++diag->base_solves > opt.max_base_solves)
                throw ResourceError("continuation exceeded the base-solve budget", *diag);
            return solve_alpha0(coeffs, dom, p, topo);
        }
        SolutionPair start = warm ? *warm : solve_level(level - 1, p, nullptr, inner_tol(tol));
        SolutionPair out;
        int iters = 0;
        double contraction = 0.0;
        if (!picard(level, p, start, tol, out, iters, contraction))
            throw ConvergenceError("ladder level failed to reconverge at alpha=" +
                                       std::to_string(alphas[level]),
                                   *diag);
        return out;
    }

    /// The reported contraction factor is the geometric mean of the ratios
    /// measured in the clean-decay regime: per-step ratios of a non-normal
    /// iteration can transiently exceed one even when the sweep decays.
    bool picard(std::size_t level, const PerturbationData& p, const SolutionPair& start,
                double tol, SolutionPair& out, int& iters, double& contraction) {
        const double delta = alphas[level] - alphas[level - 1];
        SolutionPair z = start;
        double prev_diff = -1.0;
        double first_diff = -1.0;
        double log_ratio_sum = 0.0;
        int ratio_count = 0;
        int strikes = 0;
        iters = 0;
        contraction = 0.0;
        for (int i = 0; i < opt.max_iterations; ++i) {
            ++iters;
            const PerturbationData shifted = tilde_perturbation(coeffs, dom, delta, p, z, topo);
            SolutionPair next;
            try {
                next = solve_level(level - 1, shifted, &z, inner_tol(tol));
            } catch (const ConvergenceError&) {
                return false;
            }
            const double diff = std::sqrt(pair_diff_n2_sq(next, z, topo));
            const double scale = std::sqrt(pair_n2_sq(next, topo));
            const double threshold = std::max(tol * (1.0 + scale), 1e-12);
            if (!std::isfinite(diff) || diff > 1e8 * (1.0 + scale)) return false;
            // ratios are meaningful only well above the inner noise floor
            if (prev_diff > 5.0 * threshold && diff > 0.0) {
                const double ratio = diff / prev_diff;
                log_ratio_sum += std::log(ratio);
                ++ratio_count;
                contraction = std::exp(log_ratio_sum / ratio_count);
                if (diff > 50.0 * threshold) {
                    if (ratio > 1.5) {
                        if (++strikes >= 3) return false;
                    } else {
                        strikes = 0;
                    }
                }
            }
            z = std::move(next);
            if (diff <= threshold) {
                out = std::move(z);
                return true;
            }
            if (first_diff < 0.0) first_diff = diff;
            if (i == 40 && diff > 0.25 * first_diff && diff > 50.0 * threshold) return false;
            prev_diff = diff;
        }
        return false;
    }
};

}  // namespace

ContinuationResult solve_fbsde(const CoefficientSet& coeffs, const DominationData& dom,
                               const PerturbationData& pert, double alpha_target,
                               const ContinuationOptions& options, const TreeTopology& topology,
                               const SolutionPair* warm_start) {
    options.validate();
    if (!(alpha_target >= 0.0 && alpha_target <= 1.0))
        throw UsageError("alpha_target must lie in [0, 1]");
    const auto t0 = std::chrono::steady_clock::now();

    SolveDiagnostics diag;
    diag.alpha_grid.push_back(0.0);
    Ladder ladder{.coeffs = coeffs, .dom = dom, .topo = topology, .opt = options,
                  .alphas = {0.0}, .diag = &diag};

    ++diag.base_solves;
    SolutionPair current = solve_alpha0(coeffs, dom, pert, topology);

    double alpha = 0.0;
    double delta = options.flat_first ? alpha_target : std::min(options.delta_init, alpha_target);
    bool accepted_any = false;

    while (alpha < alpha_target - 1e-15) {
        delta = std::min(delta, alpha_target - alpha);
        if (static_cast<int>(ladder.alphas.size()) - 1 >= options.max_depth)
            throw ResourceError("continuation ladder exceeded max depth", diag);
        ladder.alphas.push_back(alpha + delta);
        const SolutionPair* start = (!accepted_any && warm_start) ? warm_start : &current;
        SolutionPair next;
        int iters = 0;
        double contraction = 0.0;
        bool ok = ladder.picard(ladder.alphas.size() - 1, pert, *start, options.tolerance,
                                next, iters, contraction);
        // a rung that is not the last one gets re-solved inside every later
        // Picard sweep; accept it only when it converges with budget to spare
        // and with a genuinely contractive measured rate
        const bool is_final_rung = alpha + delta >= alpha_target - 1e-15;
        if (ok && !is_final_rung &&
            (iters > options.max_iterations / 2 || contraction > 0.9))
            ok = false;
        if (ok) {
            accepted_any = true;
            current = std::move(next);
            alpha += delta;
            diag.alpha_grid.push_back(alpha);
            diag.levels.push_back(LevelDiagnostics{alpha, delta, iters, contraction});
            // a quick acceptance earns a larger next step; failures halve it back
            if (iters <= options.max_iterations / 3) delta *= 2.0;
        } else {
            ladder.alphas.pop_back();
            delta *= 0.5;
            if (delta < options.delta_min) {
                diag.wall_seconds =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                throw ConvergenceError(
                    "continuation step underflow below delta_min (non-contraction)", diag);
            }
        }
    }

    const CoefficientSet blended = blend_alpha(coeffs, dom, alpha_target);
    const ResidualRecord rec = residual(blended, pert, current, topology);
    diag.residual = rec.overall;
    diag.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double bound =
        10.0 * options.tolerance * (1.0 + std::sqrt(pair_n2_sq(current, topology)));
    if (rec.overall > bound)
        throw ConvergenceError("accepted solve violates the residual contract", diag);
    return {std::move(current), std::move(diag)};
}

SolutionPair solve_linear_direct(const CoefficientSet& coeffs, const PerturbationData& pert,
                                 const TreeTopology& topology) {
    if (!coeffs.affine())
        throw UsageError("direct stacked solve requires affine coefficients");
    const int n = coeffs.state_dim;
    const int N = topology.horizon();
    const int q = topology.branching();
    check_perturbation(pert, n, topology);

    // unknown layout: all x levels, then all y levels, level-major node order
    std::vector<std::int64_t> xoff(static_cast<std::size_t>(N) + 1),
        yoff(static_cast<std::size_t>(N) + 1);
    std::int64_t at = 0;
    for (int k = 0; k <= N; ++k) {
        xoff[static_cast<std::size_t>(k)] = at;
        at += topology.level_size(k) * n;
    }
    for (int k = 0; k <= N; ++k) {
        yoff[static_cast<std::size_t>(k)] = at;
        at += topology.level_size(k) * n;
    }
    const std::int64_t total = at;

    Mat sys = Mat::Zero(total, total);
    Vec rhs = Vec::Zero(total);
    std::int64_t row = 0;

    auto xidx = [&](int k, std::int64_t v) { return xoff[static_cast<std::size_t>(k)] + v * n; };
    auto yidx = [&](int k, std::int64_t v) { return yoff[static_cast<std::size_t>(k)] + v * n; };

    // initial coupling: x_0 - Lambda_a y_0 = Lambda_c + xi
    sys.block(row, xidx(0, 0), n, n) = Mat::Identity(n, n);
    sys.block(row, yidx(0, 0), n, n) = -coeffs.initial.a;
    rhs.segment(row, n) = coeffs.initial.c + pert.xi;
    row += n;

    for (int k = 0; k < N; ++k) {
        const auto& blk = coeffs.steps[static_cast<std::size_t>(k)];
        for (std::int64_t v = 0; v < topology.level_size(k); ++v) {
            const auto& b = blk.drift.at(v);
            const auto& s = blk.diffusion.at(v);
            const auto& f = blk.driver.at(v);
            // forward rows, one block per child
            for (int j = 0; j < q; ++j) {
                const double w = topology.shock(j);
                sys.block(row, xidx(k + 1, v * q + j), n, n) = Mat::Identity(n, n);
                sys.block(row, xidx(k, v), n, n) = -(b.x_blk + w * s.x_blk);
                for (int l = 0; l < q; ++l) {
                    const double p = topology.branch_prob(l);
                    const double wl = topology.shock(l);
                    sys.block(row, yidx(k + 1, v * q + l), n, n) -=
                        (b.yp_blk + w * s.yp_blk) * p + (b.zp_blk + w * s.zp_blk) * (p * wl);
                }
                rhs.segment(row, n) =
                    b.c + w * s.c + pert.psi.field(k).col(v) + w * pert.gamma.field(k).col(v);
                row += n;
            }
            // backward row: y_k + f(theta) = -phi_k
            sys.block(row, yidx(k, v), n, n) = Mat::Identity(n, n);
            sys.block(row, xidx(k, v), n, n) = f.x_blk;
            for (int l = 0; l < q; ++l) {
                const double p = topology.branch_prob(l);
                const double wl = topology.shock(l);
                sys.block(row, yidx(k + 1, v * q + l), n, n) +=
                    f.yp_blk * p + f.zp_blk * (p * wl);
            }
            rhs.segment(row, n) = -f.c - pert.phi.field(k).col(v);
            row += n;
        }
    }

    for (std::int64_t u = 0; u < topology.level_size(N); ++u) {
        const auto& phi = coeffs.terminal.at(u);
        sys.block(row, yidx(N, u), n, n) = Mat::Identity(n, n);
        sys.block(row, xidx(N, u), n, n) = -phi.a;
        rhs.segment(row, n) = phi.c + pert.eta.col(u);
        row += n;
    }
    if (row != total) throw InternalError("stacked system row count mismatch");

    Eigen::PartialPivLU<Mat> lu(sys);
    const double rcond = lu.rcond();
    if (!(rcond > 1e-14))
        throw SolvabilityError("stacked system is numerically singular (rcond=" +
                               std::to_string(rcond) + ")");
    const Vec sol = lu.solve(rhs);

    SolutionPair out{AdaptedProcess(topology, n, 0, N), AdaptedProcess(topology, n, 0, N)};
    for (int k = 0; k <= N; ++k) {
        for (std::int64_t v = 0; v < topology.level_size(k); ++v) {
            out.x.field(k).col(v) = sol.segment(xidx(k, v), n);
            out.y.field(k).col(v) = sol.segment(yidx(k, v), n);
        }
    }
    return out;
}

namespace {

double duality_defect(const SolutionPair& sol, const SolutionPair& sol_bar,
                      const TreeTopology& topo) {
    const int N = topo.horizon();
    std::vector<Mat> xh(static_cast<std::size_t>(N) + 1), yh(static_cast<std::size_t>(N) + 1);
    for (int k = 0; k <= N; ++k) {
        xh[static_cast<std::size_t>(k)] = sol.x.field(k) - sol_bar.x.field(k);
        yh[static_cast<std::size_t>(k)] = sol.y.field(k) - sol_bar.y.field(k);
    }
    const double left = expectation_inner(xh[static_cast<std::size_t>(N)],
                                          yh[static_cast<std::size_t>(N)], N, topo) -
                        expectation_inner(xh[0], yh[0], 0, topo);
    double right = 0.0;
    for (int k = 0; k < N; ++k)
        right += expectation_inner(xh[static_cast<std::size_t>(k + 1)],
                                   yh[static_cast<std::size_t>(k + 1)], k + 1, topo) -
                 expectation_inner(xh[static_cast<std::size_t>(k)],
                                   yh[static_cast<std::size_t>(k)], k, topo);
    return std::abs(left - right);
}

AprioriReport finish_report(double lhs, double rhs, double defect) {
    AprioriReport rep;
    rep.lhs = lhs;
    rep.rhs = rhs;
    rep.duality_defect = defect;
    if (rhs > 0.0) {
        rep.ratio = lhs / rhs;
    } else if (lhs > 0.0) {
        rep.ratio = std::numeric_limits<double>::infinity();
        rep.ratio_defined = false;
    } else {
        rep.ratio = 0.0;
    }
    return rep;
}

}  // namespace

AprioriReport apriori_report(const CoefficientSet& coeffs, const CoefficientSet& coeffs_bar,
                             const SolutionPair& sol, const SolutionPair& sol_bar,
                             const TreeTopology& topology) {
    const int N = topology.horizon();
    const int n = coeffs.state_dim;
    check_pair(sol, n, topology);
    check_pair(sol_bar, n, topology);

    const double lhs = pair_diff_n2_sq(sol, sol_bar, topology);

    // coefficient differences along the barred solution
    const Vec y0b = sol_bar.y.field(0).col(0);
    double rhs = (coeffs.initial_map(y0b) - coeffs_bar.initial_map(y0b)).squaredNorm();
    {
        Mat dphi(n, topology.level_size(N));
        for (std::int64_t u = 0; u < dphi.cols(); ++u) {
            const Vec xb = sol_bar.x.field(N).col(u);
            dphi.col(u) = coeffs.terminal_map(NodeId{N, u}, xb) -
                          coeffs_bar.terminal_map(NodeId{N, u}, xb);
        }
        rhs += expectation_sq(dphi, N, topology);
    }
    for (int k = 0; k < N; ++k) {
        const CondPair cp = cond_prev(sol_bar.y.field(k + 1), k + 1, topology);
        Mat df(n, topology.level_size(k)), db(n, topology.level_size(k)),
            ds(n, topology.level_size(k));
        for (std::int64_t v = 0; v < df.cols(); ++v) {
            const NodeId node{k, v};
            const Vec x = sol_bar.x.field(k).col(v);
            const Vec yp = cp.mean.col(v), zp = cp.weighted.col(v);
            df.col(v) = coeffs.driver(k, node, x, yp, zp) - coeffs_bar.driver(k, node, x, yp, zp);
            db.col(v) = coeffs.drift(k, node, x, yp, zp) - coeffs_bar.drift(k, node, x, yp, zp);
            ds.col(v) = coeffs.diffusion(k, node, x, yp, zp) -
                        coeffs_bar.diffusion(k, node, x, yp, zp);
        }
        rhs += expectation_sq(df, k, topology) + expectation_sq(db, k, topology) +
               expectation_sq(ds, k, topology);
    }

    return finish_report(lhs, rhs, duality_defect(sol, sol_bar, topology));
}

AprioriReport perturbation_apriori(const PerturbationData& pert, const PerturbationData& pert_bar,
                                   const SolutionPair& sol, const SolutionPair& sol_bar,
                                   const TreeTopology& topology) {
    const double lhs = pair_diff_n2_sq(sol, sol_bar, topology);
    double rhs = (pert.xi - pert_bar.xi).squaredNorm() +
                 expectation_sq(pert.eta - pert_bar.eta, topology.horizon(), topology);
    for (int k = 0; k < topology.horizon(); ++k) {
        rhs += expectation_sq(pert.phi.field(k) - pert_bar.phi.field(k), k, topology);
        rhs += expectation_sq(pert.psi.field(k) - pert_bar.psi.field(k), k, topology);
        rhs += expectation_sq(pert.gamma.field(k) - pert_bar.gamma.field(k), k, topology);
    }
    return finish_report(lhs, rhs, duality_defect(sol, sol_bar, topology));
}

MonotoneBalance monotonicity_balance(const DominationData& dom, const PerturbationData& pert,
                                     const PerturbationData& pert_bar, const SolutionPair& sol,
                                     const SolutionPair& sol_bar, const TreeTopology& topology) {
    dom.validate();
    const int N = topology.horizon();

    MonotoneBalance bal;
    const Mat xhN = sol.x.field(N) - sol_bar.x.field(N);
    const Vec yh0 = sol.y.field(0).col(0) - sol_bar.y.field(0).col(0);

    if (dom.nu > 0.0) {
        Mat gx(dom.G.at(0).rows(), xhN.cols());
        for (std::int64_t u = 0; u < xhN.cols(); ++u) gx.col(u) = dom.G.at(u) * xhN.col(u);
        bal.lhs += dom.nu * expectation_sq(gx, N, topology);
    }
    if (dom.mu > 0.0) bal.lhs += dom.mu * (dom.M * yh0).squaredNorm();

    const Mat etah = pert.eta - pert_bar.eta;
    const Vec xih = pert.xi - pert_bar.xi;
    bal.rhs = -expectation_inner(etah, xhN, N, topology) + xih.dot(yh0);

    for (int k = 0; k < N; ++k) {
        const Mat xhk = sol.x.field(k) - sol_bar.x.field(k);
        const Mat yh_next = sol.y.field(k + 1) - sol_bar.y.field(k + 1);
        const CondPair cp = cond_prev(yh_next, k + 1, topology);
        const auto& dm = dom.steps[static_cast<std::size_t>(k)];

        Mat pf(dm.A.at(0).rows(), xhk.cols()), qf(dm.B.at(0).rows(), xhk.cols());
        for (std::int64_t v = 0; v < xhk.cols(); ++v) {
            pf.col(v) = dm.A.at(v) * xhk.col(v);
            qf.col(v) = dm.B.at(v) * cp.mean.col(v) + dm.C.at(v) * cp.weighted.col(v);
        }
        bal.lhs += dom.nu * expectation_sq(pf, k, topology) +
                   dom.mu * expectation_sq(qf, k, topology);

        const Mat psih = pert.psi.field(k) - pert_bar.psi.field(k);
        const Mat gamh = pert.gamma.field(k) - pert_bar.gamma.field(k);
        const Mat phih = pert.phi.field(k) - pert_bar.phi.field(k);
        bal.rhs += expectation_inner(psih, cp.mean, k, topology) +
                   expectation_inner(gamh, cp.weighted, k, topology) +
                   expectation_inner(xhk, phih, k, topology);
    }
    bal.slack = bal.rhs - bal.lhs;
    return bal;
}

PerturbationData flip_orientation(const PerturbationData& pert) {
    PerturbationData out = pert;
    out.eta = -out.eta;
    for (int k = 0; k <= out.phi.last_time(); ++k) out.phi.field(k) = -out.phi.field(k);
    return out;
}

SolutionPair unflip_solution(SolutionPair s) {
    for (int k = 0; k <= s.y.last_time(); ++k) s.y.field(k) = -s.y.field(k);
    return s;
}

}  // namespace sdetree
