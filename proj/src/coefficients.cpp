#include "sdetree/coefficients.hpp"

#include <array>
#include <cmath>
#include <memory>
#include <string>

#include "sdetree/rng.hpp"

namespace sdetree {

namespace {

double spectral_norm(const Mat& a) {
    if (a.size() == 0) return 0.0;
    Eigen::JacobiSVD<Mat> svd(a);
    return svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;
}

Mat random_psd(Rng& rng, int n, double target_norm) {
    Mat x = rng.gauss_matrix(n, n);
    Mat s = x.transpose() * x;
    const double nrm = spectral_norm(s);
    if (nrm <= 0.0) return Mat::Identity(n, n) * target_norm;
    return s * (target_norm / nrm);
}

Mat scaled_to_norm(Mat a, double target_norm) {
    const double nrm = spectral_norm(a);
    if (nrm <= 0.0) return a;
    return a * (target_norm / nrm);
}

Vec tanh_vec(const Vec& v) {
    return v.array().tanh().matrix();
}

}  // namespace

Vec CoefficientSet::initial_map(const Vec& y) const {
    Vec out = initial.eval(y);
    if (initial_hook) out += hook_scale * initial_hook(y);
    return out;
}

Vec CoefficientSet::terminal_map(NodeId u, const Vec& x) const {
    Vec out = terminal.at(u.index).eval(x);
    if (terminal_hook) out += hook_scale * terminal_hook(u, x);
    return out;
}

Vec CoefficientSet::driver(int k, NodeId v, const Vec& x, const Vec& yp, const Vec& zp) const {
    Vec out = steps[static_cast<std::size_t>(k)].driver.at(v.index).eval(x, yp, zp);
    if (driver_hook) out += hook_scale * driver_hook(k, v, x, yp, zp);
    return out;
}

Vec CoefficientSet::drift(int k, NodeId v, const Vec& x, const Vec& yp, const Vec& zp) const {
    Vec out = steps[static_cast<std::size_t>(k)].drift.at(v.index).eval(x, yp, zp);
    if (drift_hook) out += hook_scale * drift_hook(k, v, x, yp, zp);
    return out;
}

Vec CoefficientSet::diffusion(int k, NodeId v, const Vec& x, const Vec& yp, const Vec& zp) const {
    Vec out = steps[static_cast<std::size_t>(k)].diffusion.at(v.index).eval(x, yp, zp);
    if (diffusion_hook) out += hook_scale * diffusion_hook(k, v, x, yp, zp);
    return out;
}

CoefficientSet CoefficientSet::zero(const TreeTopology& topology, int n) {
    CoefficientSet out;
    out.state_dim = n;
    AffineVecMap zv{Mat::Zero(n, n), Vec::Zero(n)};
    out.initial = zv;
    out.terminal = NodeIndexed<AffineVecMap>(zv);
    AffineThetaMap zt{Mat::Zero(n, n), Mat::Zero(n, n), Mat::Zero(n, n), Vec::Zero(n)};
    out.steps.assign(static_cast<std::size_t>(topology.horizon()),
                     StepBlock{NodeIndexed<AffineThetaMap>(zt), NodeIndexed<AffineThetaMap>(zt),
                               NodeIndexed<AffineThetaMap>(zt)});
    return out;
}

void DominationData::validate() const {
    const bool c1 = mu > 0.0 && nu == 0.0;
    const bool c2 = mu == 0.0 && nu > 0.0;
    if (!c1 && !c2)
        throw UsageError("domination data must have exactly one of mu, nu positive");
    if (mu < 0.0 || nu < 0.0) throw UsageError("mu and nu must be nonnegative");
}

std::pair<Vec, Vec> pq_maps(const DominationData& dom, int k, NodeId v, const Vec& x,
                            const Vec& yp, const Vec& zp) {
    const auto& s = dom.steps.at(static_cast<std::size_t>(k));
    const Mat& a = s.A.at(v.index);
    const Mat& b = s.B.at(v.index);
    const Mat& c = s.C.at(v.index);
    if (a.cols() != x.size() || b.cols() != yp.size() || c.cols() != zp.size())
        throw ShapeError("pq_maps: matrix/vector dimension mismatch at step " + std::to_string(k));
    return {a * x, b * yp + c * zp};
}

CoefficientSet blend_alpha(const CoefficientSet& coeffs, const DominationData& dom, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw UsageError("alpha must lie in [0, 1]");
    dom.validate();
    const int n = coeffs.state_dim;
    const double mu = dom.mu, nu = dom.nu;

    CoefficientSet out;
    out.state_dim = n;

    out.initial.a = alpha * coeffs.initial.a - (1.0 - alpha) * mu * dom.M.transpose() * dom.M;
    out.initial.c = alpha * coeffs.initial.c;

    // terminal: per-node when either side is per-node
    {
        const std::size_t count = std::max(coeffs.terminal.stored(), dom.G.stored());
        std::vector<AffineVecMap> items;
        items.reserve(count);
        for (std::size_t u = 0; u < count; ++u) {
            const auto& phi = coeffs.terminal.at(static_cast<std::int64_t>(u));
            const Mat& g = dom.G.at(static_cast<std::int64_t>(u));
            AffineVecMap m;
            m.a = alpha * phi.a + (1.0 - alpha) * nu * g.transpose() * g;
            m.c = alpha * phi.c;
            items.push_back(std::move(m));
        }
        out.terminal = count == 1 ? NodeIndexed<AffineVecMap>(items[0])
                                  : NodeIndexed<AffineVecMap>(std::move(items));
    }

    out.steps.reserve(coeffs.steps.size());
    for (std::size_t k = 0; k < coeffs.steps.size(); ++k) {
        const auto& cs = coeffs.steps[k];
        const auto& ds = dom.steps.at(k);
        const std::size_t count = std::max({cs.driver.stored(), cs.drift.stored(),
                                            cs.diffusion.stored(), ds.A.stored(), ds.B.stored(),
                                            ds.C.stored()});
        std::vector<AffineThetaMap> fs, bs, ss;
        fs.reserve(count);
        bs.reserve(count);
        ss.reserve(count);
        for (std::size_t vi = 0; vi < count; ++vi) {
            const auto node = static_cast<std::int64_t>(vi);
            const Mat& A = ds.A.at(node);
            const Mat& B = ds.B.at(node);
            const Mat& C = ds.C.at(node);
            const auto& f0 = cs.driver.at(node);
            const auto& b0 = cs.drift.at(node);
            const auto& s0 = cs.diffusion.at(node);
            AffineThetaMap f{alpha * f0.x_blk - (1.0 - alpha) * nu * A.transpose() * A,
                             alpha * f0.yp_blk, alpha * f0.zp_blk, alpha * f0.c};
            AffineThetaMap b{alpha * b0.x_blk,
                             alpha * b0.yp_blk - (1.0 - alpha) * mu * B.transpose() * B,
                             alpha * b0.zp_blk - (1.0 - alpha) * mu * B.transpose() * C,
                             alpha * b0.c};
            AffineThetaMap s{alpha * s0.x_blk,
                             alpha * s0.yp_blk - (1.0 - alpha) * mu * C.transpose() * B,
                             alpha * s0.zp_blk - (1.0 - alpha) * mu * C.transpose() * C,
                             alpha * s0.c};
            fs.push_back(std::move(f));
            bs.push_back(std::move(b));
            ss.push_back(std::move(s));
        }
        CoefficientSet::StepBlock blk;
        blk.driver = count == 1 ? NodeIndexed<AffineThetaMap>(fs[0])
                                : NodeIndexed<AffineThetaMap>(std::move(fs));
        blk.drift = count == 1 ? NodeIndexed<AffineThetaMap>(bs[0])
                               : NodeIndexed<AffineThetaMap>(std::move(bs));
        blk.diffusion = count == 1 ? NodeIndexed<AffineThetaMap>(ss[0])
                                   : NodeIndexed<AffineThetaMap>(std::move(ss));
        out.steps.push_back(std::move(blk));
    }

    if (alpha > 0.0) {
        out.hook_scale = alpha * coeffs.hook_scale;
        out.driver_hook = coeffs.driver_hook;
        out.drift_hook = coeffs.drift_hook;
        out.diffusion_hook = coeffs.diffusion_hook;
        out.initial_hook = coeffs.initial_hook;
        out.terminal_hook = coeffs.terminal_hook;
    }
    return out;
}

ConditionReport check_conditions(const CoefficientSet& coeffs, const DominationData& dom,
                                 const TreeTopology& topology, long sample_count,
                                 std::uint64_t seed, double tolerance, Orientation orientation,
                                 double pair_spread) {
    if (sample_count < 1) throw UsageError("sample_count must be >= 1");
    dom.validate();
    const int n = coeffs.state_dim;
    const int N = topology.horizon();
    const double mu = dom.mu, nu = dom.nu;
    const bool flipped = orientation == Orientation::Flipped;

    ConditionReport rep;
    rep.orientation = orientation;
    Rng rng(seed);

    auto quotient = [](double num, double den) { return den > 0.0 ? num / den : 0.0; };

    for (long s = 0; s < sample_count; ++s) {
        const int k = static_cast<int>(s % N);
        const NodeId v{k, static_cast<std::int64_t>(
                              rng.below(static_cast<std::uint64_t>(topology.level_size(k))))};
        const Vec x = rng.gauss_vector(n), yp = rng.gauss_vector(n), zp = rng.gauss_vector(n);
        const Vec xb = x + pair_spread * rng.gauss_vector(n);
        const Vec ypb = yp + pair_spread * rng.gauss_vector(n);
        const Vec zpb = zp + pair_spread * rng.gauss_vector(n);
        const Vec xh = x - xb, yh = yp - ypb, zh = zp - zpb;

        const Vec fd = coeffs.driver(k, v, x, yp, zp) - coeffs.driver(k, v, xb, ypb, zpb);
        const Vec bd = coeffs.drift(k, v, x, yp, zp) - coeffs.drift(k, v, xb, ypb, zpb);
        const Vec sd = coeffs.diffusion(k, v, x, yp, zp) - coeffs.diffusion(k, v, xb, ypb, zpb);

        const auto [ph, qh] = pq_maps(dom, k, v, xh, yh, zh);
        const double pairing = fd.dot(xh) + bd.dot(yh) + sd.dot(zh);
        const double bound = nu * ph.squaredNorm() + mu * qh.squaredNorm();
        rep.mono_coupling.record(flipped ? pairing - bound : -bound - pairing, tolerance);

        if (nu > 0.0) {
            // driver domination: x varies, (y', z') held
            const Vec fx = coeffs.driver(k, v, x, yp, zp) - coeffs.driver(k, v, xb, yp, zp);
            rep.dom_driver.record(ph.norm() / nu - fx.norm(), tolerance);
        }
        if (mu > 0.0) {
            // drift/diffusion domination: (y', z') vary, x held
            const Vec by = coeffs.drift(k, v, x, yp, zp) - coeffs.drift(k, v, x, ypb, zpb);
            const Vec sy = coeffs.diffusion(k, v, x, yp, zp) - coeffs.diffusion(k, v, x, ypb, zpb);
            rep.dom_drift.record(qh.norm() / mu - by.norm(), tolerance);
            rep.dom_diffusion.record(qh.norm() / mu - sy.norm(), tolerance);
        }

        const double th = std::sqrt(xh.squaredNorm() + yh.squaredNorm() + zh.squaredNorm());
        rep.lip_driver = std::max(rep.lip_driver, quotient(fd.norm(), th));
        rep.lip_drift = std::max(rep.lip_drift, quotient(bd.norm(), th));
        rep.lip_diffusion = std::max(rep.lip_diffusion, quotient(sd.norm(), th));
    }

    for (long s = 0; s < sample_count; ++s) {
        const Vec y = rng.gauss_vector(n);
        const Vec yb = y + pair_spread * rng.gauss_vector(n);
        const Vec yh = y - yb;
        const Vec ld = coeffs.initial_map(y) - coeffs.initial_map(yb);
        const double inner = ld.dot(yh);
        const double bound = mu * (dom.M * yh).squaredNorm();
        rep.mono_initial.record(flipped ? inner - bound : -bound - inner, tolerance);
        if (mu > 0.0) rep.dom_initial.record((dom.M * yh).norm() / mu - ld.norm(), tolerance);
        rep.lip_initial = std::max(rep.lip_initial, quotient(ld.norm(), yh.norm()));

        const NodeId u{N, static_cast<std::int64_t>(
                              rng.below(static_cast<std::uint64_t>(topology.level_size(N))))};
        const Vec x = rng.gauss_vector(n);
        const Vec xb = x + pair_spread * rng.gauss_vector(n);
        const Vec xh = x - xb;
        const Vec pd = coeffs.terminal_map(u, x) - coeffs.terminal_map(u, xb);
        const double pin = pd.dot(xh);
        const double gbound = nu * (dom.G.at(u.index) * xh).squaredNorm();
        rep.mono_terminal.record(flipped ? -gbound - pin : pin - gbound, tolerance);
        if (nu > 0.0)
            rep.dom_terminal.record((dom.G.at(u.index) * xh).norm() / nu - pd.norm(), tolerance);
        rep.lip_terminal = std::max(rep.lip_terminal, quotient(pd.norm(), xh.norm()));
    }

    return rep;
}

MonotoneFamily make_monotone_family(const TreeTopology& topology, int state_dim, int channel_dim,
                                    double gain, std::uint64_t seed, int case_selector) {
    if (state_dim < 1 || channel_dim < 1) throw UsageError("dimensions must be >= 1");
    if (gain < 0.0) throw UsageError("gain must be nonnegative");
    if (case_selector != 1 && case_selector != 2)
        throw UsageError("case selector must be 1 or 2");

    const int n = state_dim, m = channel_dim, N = topology.horizon();
    Rng rng(seed);

    // channel matrices scaled so the domination inequalities hold with the
    // written constants for any gain up to gain_bound
    const double channel_norm = 0.5;
    const double gain_bound = 1.0 / channel_norm - 1.0;  // (1+g)*norm <= 1
    if (gain > gain_bound)
        throw UsageError("gain exceeds the bound certified by this construction");

    MonotoneFamily fam;
    fam.gain_bound = gain_bound;
    CoefficientSet& co = fam.coefficients;
    DominationData& dom = fam.domination;
    co.state_dim = n;

    const bool case1 = case_selector == 1;
    dom.mu = case1 ? 1.0 : 0.0;
    dom.nu = case1 ? 0.0 : 1.0;
    dom.M = case1 ? scaled_to_norm(rng.gauss_matrix(n, n), 0.8) : Mat::Zero(n, n);

    // cross-coupling matrices whose pairing contributions cancel exactly
    const Mat E = scaled_to_norm(rng.gauss_matrix(n, n), 0.35);
    const Mat F = scaled_to_norm(rng.gauss_matrix(n, n), 0.35);

    co.initial.a = case1 ? Mat(-dom.mu * dom.M.transpose() * dom.M) : Mat(-random_psd(rng, n, 0.5));
    co.initial.c = 0.4 * rng.gauss_vector(n);

    // terminal field, one map per level-N node
    {
        std::vector<AffineVecMap> phis;
        std::vector<Mat> gs;
        const std::int64_t leaves = topology.level_size(N);
        phis.reserve(static_cast<std::size_t>(leaves));
        gs.reserve(static_cast<std::size_t>(leaves));
        for (std::int64_t u = 0; u < leaves; ++u) {
            if (case1) {
                gs.push_back(Mat::Zero(n, n));
                phis.push_back({random_psd(rng, n, 0.3 + 0.3 * rng.uniform()),
                                0.5 * rng.gauss_vector(n)});
            } else {
                Mat g = scaled_to_norm(rng.gauss_matrix(n, n), 0.4 + 0.3 * rng.uniform());
                phis.push_back({Mat(dom.nu * g.transpose() * g), 0.5 * rng.gauss_vector(n)});
                gs.push_back(std::move(g));
            }
        }
        co.terminal = NodeIndexed<AffineVecMap>(std::move(phis));
        dom.G = NodeIndexed<Mat>(std::move(gs));
    }

    auto channels = std::make_shared<std::vector<std::array<Mat, 3>>>();  // A, B, C per step
    channels->reserve(static_cast<std::size_t>(N));
    co.steps.reserve(static_cast<std::size_t>(N));
    dom.steps.reserve(static_cast<std::size_t>(N));
    for (int k = 0; k < N; ++k) {
        Mat A = case1 ? Mat::Zero(m, n)
                      : scaled_to_norm(rng.gauss_matrix(m, n), channel_norm * (0.7 + 0.3 * rng.uniform()));
        Mat B = case1 ? scaled_to_norm(rng.gauss_matrix(m, n), channel_norm * (0.7 + 0.3 * rng.uniform()))
                      : Mat::Zero(m, n);
        Mat C = case1 ? scaled_to_norm(rng.gauss_matrix(m, n), channel_norm * (0.7 + 0.3 * rng.uniform()))
                      : Mat::Zero(m, n);

        AffineThetaMap f, b, s;
        if (case1) {
            f.x_blk = -random_psd(rng, n, 0.5);
            f.yp_blk = E.transpose();
            f.zp_blk = F.transpose();
            b.x_blk = -E;
            b.yp_blk = -dom.mu * B.transpose() * B;
            b.zp_blk = -dom.mu * B.transpose() * C;
            s.x_blk = -F;
            s.yp_blk = -dom.mu * C.transpose() * B;
            s.zp_blk = -dom.mu * C.transpose() * C;
        } else {
            f.x_blk = -dom.nu * A.transpose() * A;
            f.yp_blk = E.transpose();
            f.zp_blk = F.transpose();
            b.x_blk = -E;
            b.yp_blk = -random_psd(rng, n, 0.4);
            b.zp_blk = Mat::Zero(n, n);
            s.x_blk = -F;
            s.yp_blk = Mat::Zero(n, n);
            s.zp_blk = -random_psd(rng, n, 0.4);
        }

        // node-indexed affine offsets
        const std::int64_t nodes = topology.level_size(k);
        std::vector<AffineThetaMap> fs, bs, ss;
        fs.reserve(static_cast<std::size_t>(nodes));
        bs.reserve(static_cast<std::size_t>(nodes));
        ss.reserve(static_cast<std::size_t>(nodes));
        for (std::int64_t v = 0; v < nodes; ++v) {
            AffineThetaMap fv = f, bv = b, sv = s;
            fv.c = 0.4 * rng.gauss_vector(n);
            bv.c = 0.4 * rng.gauss_vector(n);
            sv.c = 0.4 * rng.gauss_vector(n);
            fs.push_back(std::move(fv));
            bs.push_back(std::move(bv));
            ss.push_back(std::move(sv));
        }
        CoefficientSet::StepBlock blk;
        blk.driver = NodeIndexed<AffineThetaMap>(std::move(fs));
        blk.drift = NodeIndexed<AffineThetaMap>(std::move(bs));
        blk.diffusion = NodeIndexed<AffineThetaMap>(std::move(ss));
        co.steps.push_back(std::move(blk));

        DominationData::StepMats dm;
        dm.A = NodeIndexed<Mat>(A);
        dm.B = NodeIndexed<Mat>(B);
        dm.C = NodeIndexed<Mat>(C);
        dom.steps.push_back(std::move(dm));
        channels->push_back({std::move(A), std::move(B), std::move(C)});
    }

    if (gain > 0.0) {
        const double g = gain;
        if (case1) {
            const double mu = dom.mu;
            co.driver_hook = [g](int, NodeId, const Vec& x, const Vec&, const Vec&) -> Vec {
                return -g * tanh_vec(x);
            };
            co.drift_hook = [g, mu, channels](int k, NodeId, const Vec&, const Vec& yp,
                                              const Vec& zp) -> Vec {
                const Mat& B = (*channels)[static_cast<std::size_t>(k)][1];
                const Mat& C = (*channels)[static_cast<std::size_t>(k)][2];
                return -g * mu * B.transpose() * tanh_vec(B * yp + C * zp);
            };
            co.diffusion_hook = [g, mu, channels](int k, NodeId, const Vec&, const Vec& yp,
                                                  const Vec& zp) -> Vec {
                const Mat& B = (*channels)[static_cast<std::size_t>(k)][1];
                const Mat& C = (*channels)[static_cast<std::size_t>(k)][2];
                return -g * mu * C.transpose() * tanh_vec(B * yp + C * zp);
            };
        } else {
            const double nu = dom.nu;
            co.driver_hook = [g, nu, channels](int k, NodeId, const Vec& x, const Vec&,
                                               const Vec&) -> Vec {
                const Mat& A = (*channels)[static_cast<std::size_t>(k)][0];
                return -g * nu * A.transpose() * tanh_vec(A * x);
            };
            co.drift_hook = [g](int, NodeId, const Vec&, const Vec& yp, const Vec&) -> Vec {
                return -g * tanh_vec(yp);
            };
            co.diffusion_hook = [g](int, NodeId, const Vec&, const Vec&, const Vec& zp) -> Vec {
                return -g * tanh_vec(zp);
            };
        }
    }

    const auto rep = check_conditions(fam.coefficients, fam.domination, topology, 2000,
                                      seed ^ 0x9e3779b97f4a7c15ULL, 1e-12);
    if (rep.total_violations() != 0)
        throw InternalError("monotone family generator failed its own verification");
    return fam;
}

namespace {

AffineVecMap negated_map(const AffineVecMap& m) { return {-m.a, -m.c}; }
AffineThetaMap negated_map(const AffineThetaMap& m) {
    return {-m.x_blk, -m.yp_blk, -m.zp_blk, -m.c};
}

template <class T>
NodeIndexed<T> map_items(const NodeIndexed<T>& in, T (*fn)(const T&)) {
    if (in.uniform()) return NodeIndexed<T>(fn(in.at(0)));
    std::vector<T> items;
    items.reserve(in.stored());
    for (std::size_t i = 0; i < in.stored(); ++i)
        items.push_back(fn(in.at(static_cast<std::int64_t>(i))));
    return NodeIndexed<T>(std::move(items));
}

}  // namespace

CoefficientSet negated(const CoefficientSet& coeffs) {
    CoefficientSet out;
    out.state_dim = coeffs.state_dim;
    out.initial = negated_map(coeffs.initial);
    out.terminal = map_items<AffineVecMap>(coeffs.terminal, negated_map);
    out.steps.reserve(coeffs.steps.size());
    for (const auto& s : coeffs.steps) {
        CoefficientSet::StepBlock blk;
        blk.driver = map_items<AffineThetaMap>(s.driver, negated_map);
        blk.drift = map_items<AffineThetaMap>(s.drift, negated_map);
        blk.diffusion = map_items<AffineThetaMap>(s.diffusion, negated_map);
        out.steps.push_back(std::move(blk));
    }
    out.hook_scale = coeffs.hook_scale;
    if (coeffs.driver_hook) {
        auto h = coeffs.driver_hook;
        out.driver_hook = [h](int k, NodeId v, const Vec& x, const Vec& yp, const Vec& zp) -> Vec {
            return -h(k, v, x, yp, zp);
        };
    }
    if (coeffs.drift_hook) {
        auto h = coeffs.drift_hook;
        out.drift_hook = [h](int k, NodeId v, const Vec& x, const Vec& yp, const Vec& zp) -> Vec {
            return -h(k, v, x, yp, zp);
        };
    }
    if (coeffs.diffusion_hook) {
        auto h = coeffs.diffusion_hook;
        out.diffusion_hook = [h](int k, NodeId v, const Vec& x, const Vec& yp,
                                 const Vec& zp) -> Vec { return -h(k, v, x, yp, zp); };
    }
    if (coeffs.initial_hook) {
        auto h = coeffs.initial_hook;
        out.initial_hook = [h](const Vec& y) -> Vec { return -h(y); };
    }
    if (coeffs.terminal_hook) {
        auto h = coeffs.terminal_hook;
        out.terminal_hook = [h](NodeId u, const Vec& x) -> Vec { return -h(u, x); };
    }
    return out;
}

CoefficientSet flip_orientation(const CoefficientSet& coeffs) {
    CoefficientSet out;
    out.state_dim = coeffs.state_dim;
    // Lambda°(y) = Lambda(-y)
    out.initial = {-coeffs.initial.a, coeffs.initial.c};
    // Phi° = -Phi
    out.terminal = map_items<AffineVecMap>(coeffs.terminal, negated_map);
    out.steps.reserve(coeffs.steps.size());
    for (const auto& s : coeffs.steps) {
        CoefficientSet::StepBlock blk;
        // f°(x, y', z') = -f(x, -y', -z'); h°(x, y', z') = h(x, -y', -z')
        auto flip_driver = [](const AffineThetaMap& m) -> AffineThetaMap {
            return {-m.x_blk, m.yp_blk, m.zp_blk, -m.c};
        };
        auto flip_fwd = [](const AffineThetaMap& m) -> AffineThetaMap {
            return {m.x_blk, -m.yp_blk, -m.zp_blk, m.c};
        };
        if (s.driver.uniform()) {
            blk.driver = NodeIndexed<AffineThetaMap>(flip_driver(s.driver.at(0)));
        } else {
            std::vector<AffineThetaMap> items;
            for (std::size_t i = 0; i < s.driver.stored(); ++i)
                items.push_back(flip_driver(s.driver.at(static_cast<std::int64_t>(i))));
            blk.driver = NodeIndexed<AffineThetaMap>(std::move(items));
        }
        auto flip_indexed = [&](const NodeIndexed<AffineThetaMap>& in) {
            if (in.uniform()) return NodeIndexed<AffineThetaMap>(flip_fwd(in.at(0)));
            std::vector<AffineThetaMap> items;
            for (std::size_t i = 0; i < in.stored(); ++i)
                items.push_back(flip_fwd(in.at(static_cast<std::int64_t>(i))));
            return NodeIndexed<AffineThetaMap>(std::move(items));
        };
        blk.drift = flip_indexed(s.drift);
        blk.diffusion = flip_indexed(s.diffusion);
        out.steps.push_back(std::move(blk));
    }
    out.hook_scale = coeffs.hook_scale;
    if (coeffs.driver_hook) {
        auto h = coeffs.driver_hook;
        out.driver_hook = [h](int k, NodeId v, const Vec& x, const Vec& yp, const Vec& zp) -> Vec {
            return -h(k, v, x, -yp, -zp);
        };
    }
    if (coeffs.drift_hook) {
        auto h = coeffs.drift_hook;
        out.drift_hook = [h](int k, NodeId v, const Vec& x, const Vec& yp, const Vec& zp) -> Vec {
            return h(k, v, x, -yp, -zp);
        };
    }
    if (coeffs.diffusion_hook) {
        auto h = coeffs.diffusion_hook;
        out.diffusion_hook = [h](int k, NodeId v, const Vec& x, const Vec& yp,
                                 const Vec& zp) -> Vec { return h(k, v, x, -yp, -zp); };
    }
    if (coeffs.initial_hook) {
        auto h = coeffs.initial_hook;
        out.initial_hook = [h](const Vec& y) -> Vec { return h(-y); };
    }
    if (coeffs.terminal_hook) {
        auto h = coeffs.terminal_hook;
        out.terminal_hook = [h](NodeId u, const Vec& x) -> Vec { return -h(u, x); };
    }
    return out;
}

}  // namespace sdetree
