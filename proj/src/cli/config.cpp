#include "cli/config.hpp"

#include <fstream>
#include <set>

namespace sdetree::cli {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw UsageError("config error at '" + path + "': " + what);
}

void expect_keys(const Json& j, const std::string& path, const std::set<std::string>& allowed) {
    if (!j.is_object()) fail(path, "expected an object");
    for (const auto& [key, _] : j.items())
        if (!allowed.count(key)) fail(path, "unknown key '" + key + "'");
}

const Json& require(const Json& j, const std::string& path, const std::string& key) {
    if (!j.contains(key)) fail(path, "missing key '" + key + "'");
    return j.at(key);
}

double number_at(const Json& j, const std::string& path) {
    if (!j.is_number()) fail(path, "expected a number");
    return j.get<double>();
}

std::int64_t integer_at(const Json& j, const std::string& path) {
    if (!j.is_number_integer()) fail(path, "expected an integer");
    return j.get<std::int64_t>();
}

Vec vector_at(const Json& j, const std::string& path) {
    if (!j.is_array()) fail(path, "expected an array of numbers");
    Vec out(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i)
        out(static_cast<Eigen::Index>(i)) = number_at(j[i], path + "[" + std::to_string(i) + "]");
    return out;
}

Mat matrix_at(const Json& j, const std::string& path) {
    if (!j.is_array() || j.empty()) fail(path, "expected an array of rows");
    const std::size_t rows = j.size();
    Vec first = vector_at(j[0], path + "[0]");
    Mat out(static_cast<Eigen::Index>(rows), first.size());
    out.row(0) = first.transpose();
    for (std::size_t r = 1; r < rows; ++r) {
        const Vec row = vector_at(j[r], path + "[" + std::to_string(r) + "]");
        if (row.size() != first.size()) fail(path, "ragged matrix rows");
        out.row(static_cast<Eigen::Index>(r)) = row.transpose();
    }
    return out;
}

// a per-step sequence: either one entry broadcast to all steps or a list with
// one entry per step
template <class T, class ParseFn>
std::vector<T> per_step(const Json& j, const std::string& path, int steps, ParseFn&& parse_one,
                        bool list_of_lists) {
    std::vector<T> out;
    const bool is_seq = j.is_array() && list_of_lists;
    if (is_seq) {
        if (static_cast<int>(j.size()) != steps)
            fail(path, "expected " + std::to_string(steps) + " per-step entries");
        for (std::size_t k = 0; k < j.size(); ++k)
            out.push_back(parse_one(j[k], path + "[" + std::to_string(k) + "]"));
    } else {
        const T one = parse_one(j, path);
        out.assign(static_cast<std::size_t>(steps), one);
    }
    return out;
}

// matrix entry that may carry a per-node list: {"per_node": [mat, ...]} or mat
NodeIndexed<Mat> node_mats_at(const Json& j, const std::string& path, std::int64_t nodes) {
    if (j.is_object()) {
        expect_keys(j, path, {"per_node"});
        const Json& list = require(j, path, "per_node");
        if (!list.is_array() || static_cast<std::int64_t>(list.size()) != nodes)
            fail(path + ".per_node", "expected " + std::to_string(nodes) + " matrices");
        std::vector<Mat> mats;
        for (std::size_t i = 0; i < list.size(); ++i)
            mats.push_back(matrix_at(list[i], path + ".per_node[" + std::to_string(i) + "]"));
        return NodeIndexed<Mat>(std::move(mats));
    }
    return NodeIndexed<Mat>(matrix_at(j, path));
}

NodeIndexed<Vec> node_vecs_at(const Json& j, const std::string& path, std::int64_t nodes) {
    if (j.is_object()) {
        expect_keys(j, path, {"per_node"});
        const Json& list = require(j, path, "per_node");
        if (!list.is_array() || static_cast<std::int64_t>(list.size()) != nodes)
            fail(path + ".per_node", "expected " + std::to_string(nodes) + " vectors");
        std::vector<Vec> vecs;
        for (std::size_t i = 0; i < list.size(); ++i)
            vecs.push_back(vector_at(list[i], path + ".per_node[" + std::to_string(i) + "]"));
        return NodeIndexed<Vec>(std::move(vecs));
    }
    return NodeIndexed<Vec>(vector_at(j, path));
}

AffineVecMap vec_map_at(const Json& j, const std::string& path) {
    expect_keys(j, path, {"a", "c"});
    return AffineVecMap{matrix_at(require(j, path, "a"), path + ".a"),
                        vector_at(require(j, path, "c"), path + ".c")};
}

AffineThetaMap theta_map_at(const Json& j, const std::string& path, int n) {
    expect_keys(j, path, {"x", "yp", "zp", "c"});
    AffineThetaMap m;
    m.x_blk = j.contains("x") ? matrix_at(j.at("x"), path + ".x") : Mat::Zero(n, n);
    m.yp_blk = j.contains("yp") ? matrix_at(j.at("yp"), path + ".yp") : Mat::Zero(n, n);
    m.zp_blk = j.contains("zp") ? matrix_at(j.at("zp"), path + ".zp") : Mat::Zero(n, n);
    m.c = j.contains("c") ? vector_at(j.at("c"), path + ".c") : Vec::Zero(n);
    return m;
}

Orientation orientation_at(const Json& j, const std::string& path) {
    const std::string s = j.is_string() ? j.get<std::string>() : "";
    if (s == "standard") return Orientation::Standard;
    if (s == "flipped") return Orientation::Flipped;
    fail(path, "expected \"standard\" or \"flipped\"");
}

std::vector<double> scalars_per_step(const Json& j, const std::string& path, int steps) {
    std::vector<double> out;
    if (j.is_array()) {
        if (static_cast<int>(j.size()) != steps)
            fail(path, "expected " + std::to_string(steps) + " per-step values");
        for (std::size_t i = 0; i < j.size(); ++i)
            out.push_back(number_at(j[i], path + "[" + std::to_string(i) + "]"));
    } else {
        out.assign(static_cast<std::size_t>(steps), number_at(j, path));
    }
    return out;
}

}  // namespace

std::string mode_name(Mode m) {
    switch (m) {
        case Mode::Sde: return "sde";
        case Mode::Bsde: return "bsde";
        case Mode::Fbsde: return "fbsde";
        case Mode::Check: return "check";
        case Mode::Flq: return "flq";
        case Mode::Blq: return "blq";
        case Mode::Insurance: return "insurance";
        case Mode::Suite: return "suite";
    }
    return "?";
}

ExperimentConfig parse_config(const Json& doc) {
    expect_keys(doc, "$",
                {"mode", "topology", "dimensions", "coefficients", "domination", "perturbation",
                 "solver", "check", "sde", "bsde", "flq", "blq", "insurance", "suite", "output"});

    ExperimentConfig cfg;

    const std::string mode = require(doc, "$", "mode").is_string()
                                 ? doc.at("mode").get<std::string>()
                                 : "";
    if (mode == "sde") cfg.mode = Mode::Sde;
    else if (mode == "bsde") cfg.mode = Mode::Bsde;
    else if (mode == "fbsde") cfg.mode = Mode::Fbsde;
    else if (mode == "check") cfg.mode = Mode::Check;
    else if (mode == "flq") cfg.mode = Mode::Flq;
    else if (mode == "blq") cfg.mode = Mode::Blq;
    else if (mode == "insurance") cfg.mode = Mode::Insurance;
    else if (mode == "suite") cfg.mode = Mode::Suite;
    else fail("$.mode", "unknown mode '" + mode + "'");

    // topology (optional for suite mode)
    if (doc.contains("topology")) {
        const Json& t = doc.at("topology");
        expect_keys(t, "$.topology", {"horizon", "support", "prob"});
        const int horizon =
            static_cast<int>(integer_at(require(t, "$.topology", "horizon"), "$.topology.horizon"));
        if (t.contains("support") != t.contains("prob"))
            fail("$.topology", "support and prob must be given together");
        if (t.contains("support")) {
            cfg.topology = TreeTopology(horizon, vector_at(t.at("support"), "$.topology.support"),
                                        vector_at(t.at("prob"), "$.topology.prob"));
        } else {
            cfg.topology = TreeTopology::rademacher(horizon);
        }
    } else if (cfg.mode != Mode::Suite) {
        fail("$", "missing key 'topology'");
    }

    if (doc.contains("dimensions")) {
        const Json& d = doc.at("dimensions");
        expect_keys(d, "$.dimensions", {"n", "m"});
        cfg.n = static_cast<int>(integer_at(require(d, "$.dimensions", "n"), "$.dimensions.n"));
        if (d.contains("m"))
            cfg.m = static_cast<int>(integer_at(d.at("m"), "$.dimensions.m"));
        if (cfg.n < 1 || cfg.m < 1) fail("$.dimensions", "dimensions must be >= 1");
    }

    if (doc.contains("coefficients")) {
        const Json& c = doc.at("coefficients");
        expect_keys(c, "$.coefficients", {"family", "affine"});
        if (c.contains("family") == c.contains("affine"))
            fail("$.coefficients", "exactly one of 'family' or 'affine' is required");
        if (c.contains("family")) {
            const Json& f = c.at("family");
            expect_keys(f, "$.coefficients.family",
                        {"name", "case", "gain", "seed", "channel_dim", "orientation"});
            const std::string name =
                require(f, "$.coefficients.family", "name").get<std::string>();
            if (name != "monotone")
                fail("$.coefficients.family.name", "unknown family '" + name + "'");
            FamilySpec fs;
            fs.case_selector = static_cast<int>(
                integer_at(require(f, "$.coefficients.family", "case"), "$...case"));
            if (f.contains("gain")) fs.gain = number_at(f.at("gain"), "$...gain");
            if (f.contains("seed"))
                fs.seed = static_cast<std::uint64_t>(integer_at(f.at("seed"), "$...seed"));
            if (f.contains("channel_dim"))
                fs.channel_dim =
                    static_cast<int>(integer_at(f.at("channel_dim"), "$...channel_dim"));
            if (f.contains("orientation"))
                fs.flipped = orientation_at(f.at("orientation"),
                                            "$.coefficients.family.orientation") ==
                             Orientation::Flipped;
            cfg.family = fs;
        } else {
            cfg.affine = c.at("affine");
        }
    }
    if (doc.contains("domination")) cfg.domination = doc.at("domination");

    if (doc.contains("perturbation")) {
        const Json& p = doc.at("perturbation");
        expect_keys(p, "$.perturbation", {"seed", "scale"});
        if (p.contains("seed"))
            cfg.perturbation.seed =
                static_cast<std::uint64_t>(integer_at(p.at("seed"), "$.perturbation.seed"));
        if (p.contains("scale"))
            cfg.perturbation.scale = number_at(p.at("scale"), "$.perturbation.scale");
    }

    if (doc.contains("solver")) {
        const Json& s = doc.at("solver");
        expect_keys(s, "$.solver",
                    {"tolerance", "max_iterations", "delta_init", "delta_min", "flat_first",
                     "max_depth", "alpha_target", "orientation"});
        auto& o = cfg.solver.options;
        if (s.contains("tolerance")) o.tolerance = number_at(s.at("tolerance"), "$.solver.tolerance");
        if (s.contains("max_iterations"))
            o.max_iterations =
                static_cast<int>(integer_at(s.at("max_iterations"), "$.solver.max_iterations"));
        if (s.contains("delta_init"))
            o.delta_init = number_at(s.at("delta_init"), "$.solver.delta_init");
        if (s.contains("delta_min")) o.delta_min = number_at(s.at("delta_min"), "$.solver.delta_min");
        if (s.contains("flat_first")) {
            if (!s.at("flat_first").is_boolean()) fail("$.solver.flat_first", "expected a boolean");
            o.flat_first = s.at("flat_first").get<bool>();
        }
        if (s.contains("max_depth"))
            o.max_depth = static_cast<int>(integer_at(s.at("max_depth"), "$.solver.max_depth"));
        if (s.contains("alpha_target"))
            cfg.solver.alpha_target = number_at(s.at("alpha_target"), "$.solver.alpha_target");
        if (s.contains("orientation"))
            cfg.solver.orientation = orientation_at(s.at("orientation"), "$.solver.orientation");
        o.validate();
    }

    if (doc.contains("check")) {
        const Json& s = doc.at("check");
        expect_keys(s, "$.check", {"samples", "seed", "tolerance", "orientation"});
        if (s.contains("samples"))
            cfg.check.samples = integer_at(s.at("samples"), "$.check.samples");
        if (s.contains("seed"))
            cfg.check.seed = static_cast<std::uint64_t>(integer_at(s.at("seed"), "$.check.seed"));
        if (s.contains("tolerance"))
            cfg.check.tolerance = number_at(s.at("tolerance"), "$.check.tolerance");
        if (s.contains("orientation"))
            cfg.check.orientation = orientation_at(s.at("orientation"), "$.check.orientation");
    }

    const int N = cfg.topology.horizon();

    if (doc.contains("sde")) {
        const Json& s = doc.at("sde");
        expect_keys(s, "$.sde", {"initial", "drift", "diffusion"});
        SdeSpec spec;
        spec.initial = vector_at(require(s, "$.sde", "initial"), "$.sde.initial");
        auto one = [&](const Json& j, const std::string& p) { return vec_map_at(j, p); };
        spec.drift = per_step<AffineVecMap>(require(s, "$.sde", "drift"), "$.sde.drift", N, one,
                                            true);
        spec.diffusion = per_step<AffineVecMap>(require(s, "$.sde", "diffusion"),
                                                "$.sde.diffusion", N, one, true);
        cfg.sde = std::move(spec);
    }

    if (doc.contains("bsde")) {
        const Json& s = doc.at("bsde");
        expect_keys(s, "$.bsde", {"terminal", "driver"});
        BsdeSpec spec;
        const Json& term = require(s, "$.bsde", "terminal");
        const std::int64_t leaves = cfg.topology.level_size(N);
        if (term.is_array() && !term.empty() && term[0].is_array()) {
            spec.terminal = matrix_at(term, "$.bsde.terminal");
            if (spec.terminal.cols() != leaves) fail("$.bsde.terminal", "wrong leaf count");
        } else {
            const Vec v = vector_at(term, "$.bsde.terminal");
            spec.terminal = v.replicate(1, leaves);
        }
        auto one = [&](const Json& j, const std::string& p) {
            return theta_map_at(j, p, static_cast<int>(spec.terminal.rows()));
        };
        spec.driver = per_step<AffineThetaMap>(require(s, "$.bsde", "driver"), "$.bsde.driver", N,
                                               one, true);
        cfg.bsde = std::move(spec);
    }

    if (doc.contains("flq")) cfg.flq = doc.at("flq");
    if (doc.contains("blq")) cfg.blq = doc.at("blq");

    if (doc.contains("insurance")) {
        const Json& s = doc.at("insurance");
        expect_keys(s, "$.insurance", {"r", "rho", "sigma", "lambda", "c", "m0", "u"});
        InsuranceSpec spec;
        spec.params.rate = scalars_per_step(require(s, "$.insurance", "r"), "$.insurance.r", N);
        spec.params.premium =
            scalars_per_step(require(s, "$.insurance", "rho"), "$.insurance.rho", N);
        spec.params.vol =
            scalars_per_step(require(s, "$.insurance", "sigma"), "$.insurance.sigma", N);
        spec.params.growth =
            scalars_per_step(require(s, "$.insurance", "lambda"), "$.insurance.lambda", N);
        spec.params.payout = scalars_per_step(require(s, "$.insurance", "c"), "$.insurance.c", N);
        spec.params.initial_wealth = number_at(require(s, "$.insurance", "m0"), "$.insurance.m0");
        const Json& u = require(s, "$.insurance", "u");
        if (u.is_object()) {
            expect_keys(u, "$.insurance.u", {"seed"});
            spec.u_seed =
                static_cast<std::uint64_t>(integer_at(require(u, "$.insurance.u", "seed"),
                                                      "$.insurance.u.seed"));
        } else {
            spec.u_per_step = scalars_per_step(u, "$.insurance.u", N);
        }
        cfg.insurance = std::move(spec);
    }

    if (doc.contains("suite")) {
        const Json& s = doc.at("suite");
        expect_keys(s, "$.suite", {"criteria", "seed"});
        if (s.contains("criteria")) {
            const Json& list = s.at("criteria");
            if (!list.is_array()) fail("$.suite.criteria", "expected an array");
            for (std::size_t i = 0; i < list.size(); ++i)
                cfg.suite.criteria.push_back(static_cast<int>(
                    integer_at(list[i], "$.suite.criteria[" + std::to_string(i) + "]")));
        } else {
            for (int i = 1; i <= 11; ++i) cfg.suite.criteria.push_back(i);
        }
        if (s.contains("seed"))
            cfg.suite.seed = static_cast<std::uint64_t>(integer_at(s.at("seed"), "$.suite.seed"));
    } else if (cfg.mode == Mode::Suite) {
        for (int i = 1; i <= 11; ++i) cfg.suite.criteria.push_back(i);
    }
    if (cfg.mode == Mode::Suite && cfg.suite.criteria.empty())
        fail("$.suite.criteria", "empty criteria selection");

    if (doc.contains("output")) {
        const Json& o = doc.at("output");
        expect_keys(o, "$.output", {"report", "trajectories", "diagnostics"});
        if (o.contains("report")) cfg.output.report = o.at("report").get<std::string>();
        if (o.contains("trajectories"))
            cfg.output.trajectories = o.at("trajectories").get<std::string>();
        if (o.contains("diagnostics"))
            cfg.output.diagnostics = o.at("diagnostics").get<std::string>();
    }

    // eager structural validation of lazily-built blocks (unknown keys and
    // shape mismatches surface at parse time)
    if (cfg.flq) (void)cfg.build_flq();
    if (cfg.blq) (void)cfg.build_blq();
    if (cfg.affine && cfg.domination) (void)cfg.build_system(std::nullopt);

    // mode-specific required blocks
    switch (cfg.mode) {
        case Mode::Sde:
            if (!cfg.sde) fail("$", "mode 'sde' needs an 'sde' block");
            break;
        case Mode::Bsde:
            if (!cfg.bsde) fail("$", "mode 'bsde' needs a 'bsde' block");
            break;
        case Mode::Fbsde:
        case Mode::Check:
            if (!cfg.family && !cfg.affine)
                fail("$", "mode '" + mode + "' needs a 'coefficients' block");
            if (cfg.affine && !cfg.domination)
                fail("$", "affine coefficients need a 'domination' block");
            break;
        case Mode::Flq:
            if (!cfg.flq) fail("$", "mode 'flq' needs an 'flq' block");
            break;
        case Mode::Blq:
            if (!cfg.blq) fail("$", "mode 'blq' needs a 'blq' block");
            break;
        case Mode::Insurance:
            if (!cfg.insurance) fail("$", "mode 'insurance' needs an 'insurance' block");
            break;
        case Mode::Suite:
            break;
    }
    return cfg;
}

std::pair<CoefficientSet, DominationData> ExperimentConfig::build_system(
    std::optional<std::uint64_t> seed_override) const {
    if (family) {
        const std::uint64_t seed = seed_override.value_or(family->seed);
        auto fam = make_monotone_family(topology, n, family->channel_dim, family->gain, seed,
                                        family->case_selector);
        CoefficientSet co =
            family->flipped ? negated(fam.coefficients) : std::move(fam.coefficients);
        return {std::move(co), std::move(fam.domination)};
    }

    const Json& a = *affine;
    const std::string base = "$.coefficients.affine";
    expect_keys(a, base, {"initial", "terminal", "steps"});
    CoefficientSet co;
    co.state_dim = n;
    co.initial = vec_map_at(require(a, base, "initial"), base + ".initial");
    {
        const Json& t = require(a, base, "terminal");
        const std::int64_t leaves = topology.level_size(topology.horizon());
        if (t.is_object() && t.contains("per_node")) {
            expect_keys(t, base + ".terminal", {"per_node"});
            const Json& list = t.at("per_node");
            if (!list.is_array() || static_cast<std::int64_t>(list.size()) != leaves)
                fail(base + ".terminal.per_node", "expected one map per leaf");
            std::vector<AffineVecMap> maps;
            for (std::size_t i = 0; i < list.size(); ++i)
                maps.push_back(vec_map_at(list[i],
                                          base + ".terminal.per_node[" + std::to_string(i) + "]"));
            co.terminal = NodeIndexed<AffineVecMap>(std::move(maps));
        } else {
            co.terminal = NodeIndexed<AffineVecMap>(vec_map_at(t, base + ".terminal"));
        }
    }
    {
        const Json& steps = require(a, base, "steps");
        auto one = [&](const Json& j, const std::string& p) -> CoefficientSet::StepBlock {
            expect_keys(j, p, {"driver", "drift", "diffusion"});
            CoefficientSet::StepBlock blk;
            blk.driver = NodeIndexed<AffineThetaMap>(
                theta_map_at(require(j, p, "driver"), p + ".driver", n));
            blk.drift = NodeIndexed<AffineThetaMap>(
                theta_map_at(require(j, p, "drift"), p + ".drift", n));
            blk.diffusion = NodeIndexed<AffineThetaMap>(
                theta_map_at(require(j, p, "diffusion"), p + ".diffusion", n));
            return blk;
        };
        co.steps = per_step<CoefficientSet::StepBlock>(steps, base + ".steps",
                                                       topology.horizon(), one, true);
    }

    const Json& d = *domination;
    expect_keys(d, "$.domination", {"mu", "nu", "M", "G", "steps"});
    DominationData dom;
    dom.mu = number_at(require(d, "$.domination", "mu"), "$.domination.mu");
    dom.nu = number_at(require(d, "$.domination", "nu"), "$.domination.nu");
    dom.M = matrix_at(require(d, "$.domination", "M"), "$.domination.M");
    dom.G = node_mats_at(require(d, "$.domination", "G"), "$.domination.G",
                         topology.level_size(topology.horizon()));
    {
        const Json& steps = require(d, "$.domination", "steps");
        auto one = [&](const Json& j, const std::string& p) -> DominationData::StepMats {
            expect_keys(j, p, {"A", "B", "C"});
            DominationData::StepMats sm;
            sm.A = NodeIndexed<Mat>(matrix_at(require(j, p, "A"), p + ".A"));
            sm.B = NodeIndexed<Mat>(matrix_at(require(j, p, "B"), p + ".B"));
            sm.C = NodeIndexed<Mat>(matrix_at(require(j, p, "C"), p + ".C"));
            return sm;
        };
        dom.steps = per_step<DominationData::StepMats>(steps, "$.domination.steps",
                                                       topology.horizon(), one, true);
    }
    dom.validate();
    return {std::move(co), std::move(dom)};
}

namespace {

std::vector<NodeIndexed<Mat>> lq_mats(const Json& j, const std::string& path, int steps,
                                      std::int64_t (*nodes_of)(const TreeTopology&, int),
                                      const TreeTopology& topo) {
    // per-step list when the outer array holds objects or nested arrays of rows
    std::vector<NodeIndexed<Mat>> out;
    const bool per_step_list = j.is_array() && !j.empty() &&
                               (j[0].is_object() || (j[0].is_array() && !j[0].empty() &&
                                                     j[0][0].is_array()));
    if (per_step_list) {
        if (static_cast<int>(j.size()) != steps)
            fail(path, "expected " + std::to_string(steps) + " per-step entries");
        for (int k = 0; k < steps; ++k)
            out.push_back(node_mats_at(j[static_cast<std::size_t>(k)],
                                       path + "[" + std::to_string(k) + "]", nodes_of(topo, k)));
    } else {
        const Mat m = matrix_at(j, path);
        out.assign(static_cast<std::size_t>(steps), NodeIndexed<Mat>(m));
    }
    return out;
}

std::vector<NodeIndexed<Vec>> lq_vecs(const Json& j, const std::string& path, int steps,
                                      const TreeTopology& topo) {
    std::vector<NodeIndexed<Vec>> out;
    const bool per_step_list = j.is_array() && !j.empty() && (j[0].is_array() || j[0].is_object());
    if (per_step_list) {
        if (static_cast<int>(j.size()) != steps)
            fail(path, "expected " + std::to_string(steps) + " per-step entries");
        for (int k = 0; k < steps; ++k)
            out.push_back(node_vecs_at(j[static_cast<std::size_t>(k)],
                                       path + "[" + std::to_string(k) + "]",
                                       topo.level_size(k)));
    } else {
        const Vec v = vector_at(j, path);
        out.assign(static_cast<std::size_t>(steps), NodeIndexed<Vec>(v));
    }
    return out;
}

std::int64_t level_nodes(const TreeTopology& topo, int k) { return topo.level_size(k); }

}  // namespace

ForwardLqData ExperimentConfig::build_flq() const {
    const Json& j = *flq;
    const std::string base = "$.flq";
    expect_keys(j, base, {"A", "B", "C", "D", "b", "sigma", "M", "G", "Q", "R", "r_floor"});
    ForwardLqData d;
    d.topology = topology;
    d.n = n;
    d.m = m;
    const int N = topology.horizon();
    d.A = lq_mats(require(j, base, "A"), base + ".A", N, level_nodes, topology);
    d.B = lq_mats(require(j, base, "B"), base + ".B", N, level_nodes, topology);
    d.C = lq_mats(require(j, base, "C"), base + ".C", N, level_nodes, topology);
    d.D = lq_mats(require(j, base, "D"), base + ".D", N, level_nodes, topology);
    d.b0 = lq_vecs(require(j, base, "b"), base + ".b", N, topology);
    d.sigma0 = lq_vecs(require(j, base, "sigma"), base + ".sigma", N, topology);
    d.M = matrix_at(require(j, base, "M"), base + ".M");
    d.G = node_mats_at(require(j, base, "G"), base + ".G", topology.level_size(N));
    d.Q = lq_mats(require(j, base, "Q"), base + ".Q", N, level_nodes, topology);
    d.R = lq_mats(require(j, base, "R"), base + ".R", N, level_nodes, topology);
    if (j.contains("r_floor")) d.r_floor = number_at(j.at("r_floor"), base + ".r_floor");
    return d;
}

BackwardLqData ExperimentConfig::build_blq() const {
    const Json& j = *blq;
    const std::string base = "$.blq";
    expect_keys(j, base, {"A", "B", "C", "alpha", "eta", "M", "Q", "L", "R", "r_floor"});
    BackwardLqData d;
    d.topology = topology;
    d.n = n;
    d.m = m;
    const int N = topology.horizon();
    d.A = lq_mats(require(j, base, "A"), base + ".A", N, level_nodes, topology);
    d.B = lq_mats(require(j, base, "B"), base + ".B", N, level_nodes, topology);
    d.C = lq_mats(require(j, base, "C"), base + ".C", N, level_nodes, topology);
    d.alpha0 = lq_vecs(require(j, base, "alpha"), base + ".alpha", N, topology);
    const Json& eta = require(j, base, "eta");
    const std::int64_t leaves = topology.level_size(N);
    if (eta.is_array() && !eta.empty() && eta[0].is_array()) {
        d.eta = matrix_at(eta, base + ".eta");
        if (d.eta.cols() != leaves) fail(base + ".eta", "wrong leaf count");
    } else {
        const Vec v = vector_at(eta, base + ".eta");
        d.eta = v.replicate(1, leaves);
    }
    d.M = matrix_at(require(j, base, "M"), base + ".M");
    d.Q = lq_mats(require(j, base, "Q"), base + ".Q", N, level_nodes, topology);
    d.L = lq_mats(require(j, base, "L"), base + ".L", N, level_nodes, topology);
    d.R = lq_mats(require(j, base, "R"), base + ".R", N, level_nodes, topology);
    if (j.contains("r_floor")) d.r_floor = number_at(j.at("r_floor"), base + ".r_floor");
    return d;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read config file '" + path + "'");
    Json doc;
    try {
        doc = Json::parse(in);
    } catch (const std::exception& e) {
        throw UsageError("config parse failure in '" + path + "': " + e.what());
    }
    return parse_config(doc);
}

}  // namespace sdetree::cli
