#include "cli/runner.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include "acceptance/acceptance.hpp"
#include "cli/report.hpp"

namespace sdetree::cli {

namespace {

std::string fmt_line(const char* pattern, double a, double b = 0.0, double c = 0.0) {
    char buf[200];
    std::snprintf(buf, sizeof buf, pattern, a, b, c);
    return std::string(buf);
}

struct Sink {
    const ExperimentConfig& cfg;
    const RunOptions& opts;
    Json report;
    std::vector<TrajectoryRow> rows;
    std::optional<SolveDiagnostics> diagnostics;

    std::string path_of(const std::string& name) const {
        return (std::filesystem::path(opts.out_dir) / name).string();
    }

    void flush() const {
        std::filesystem::create_directories(opts.out_dir);
        write_report(path_of(cfg.output.report), report);
        write_trajectories(path_of(cfg.output.trajectories), rows);
        write_diagnostics_csv(path_of(cfg.output.diagnostics),
                              diagnostics ? *diagnostics : SolveDiagnostics{});
    }

    void say(const std::string& line) const {
        if (!opts.quiet) std::cout << line << "\n";
    }
};

Json header(const ExperimentConfig& cfg, std::optional<std::uint64_t> seed_override) {
    Json j;
    j["schema"] = "sdetree-report/1";
    j["mode"] = mode_name(cfg.mode);
    if (seed_override) j["seed_override"] = *seed_override;
    if (cfg.mode != Mode::Suite) j["topology"] = topology_json(cfg.topology);
    return j;
}

int run_sde(const ExperimentConfig& cfg, Sink& sink) {
    const SdeSpec& spec = *cfg.sde;
    SdeProblem p;
    p.topology = cfg.topology;
    p.dim = static_cast<int>(spec.initial.size());
    p.initial = spec.initial;
    p.drift = [&spec](int k, NodeId, const Vec& x) -> Vec {
        return spec.drift[static_cast<std::size_t>(k)].eval(x);
    };
    p.diffusion = [&spec](int k, NodeId, const Vec& x) -> Vec {
        return spec.diffusion[static_cast<std::size_t>(k)].eval(x);
    };
    const AdaptedProcess x = solve_sde(p);
    const auto rep = sde_stability_report(p, p);

    sink.report["solution"] = Json{{"x", process_json(x)}};
    Json st;
    st["zero_data_lhs"] = rep.zero_data.lhs;
    st["zero_data_rhs"] = rep.zero_data.rhs;
    st["zero_data_ratio"] = rep.zero_data.ratio;
    sink.report["stability"] = std::move(st);
    append_process_rows(sink.rows, "x", x);
    sink.say(fmt_line("sde: n2_sq(x)=%.6g zero-data ratio=%.6g", n2_sq(x, cfg.topology),
                      rep.zero_data.ratio));
    return 0;
}

int run_bsde(const ExperimentConfig& cfg, Sink& sink) {
    const BsdeSpec& spec = *cfg.bsde;
    BsdeProblem p;
    p.topology = cfg.topology;
    p.dim = static_cast<int>(spec.terminal.rows());
    p.terminal = spec.terminal;
    p.driver = [&spec](int k, NodeId, const Vec& yp, const Vec& zp) -> Vec {
        const auto& m = spec.driver[static_cast<std::size_t>(k)];
        return m.yp_blk * yp + m.zp_blk * zp + m.c;
    };
    const AdaptedProcess y = solve_bsde(p);
    const auto rep = bsde_stability_report(p, p);

    sink.report["solution"] = Json{{"y", process_json(y)}};
    Json st;
    st["zero_data_lhs"] = rep.zero_data.lhs;
    st["zero_data_rhs"] = rep.zero_data.rhs;
    st["zero_data_ratio"] = rep.zero_data.ratio;
    sink.report["stability"] = std::move(st);
    append_process_rows(sink.rows, "y", y);
    sink.say(fmt_line("bsde: n2_sq(y)=%.6g", n2_sq(y, cfg.topology)));
    return 0;
}

int run_fbsde(const ExperimentConfig& cfg, Sink& sink) {
    auto [coeffs, dom] = cfg.build_system(sink.opts.seed_override);
    const PerturbationData pert =
        cfg.perturbation.seed
            ? PerturbationData::random(cfg.topology, cfg.n,
                                       sink.opts.seed_override.value_or(*cfg.perturbation.seed),
                                       cfg.perturbation.scale)
            : PerturbationData::zero(cfg.topology, cfg.n);

    const bool flipped = cfg.solver.orientation == Orientation::Flipped;
    const CoefficientSet solvable = flipped ? flip_orientation(coeffs) : coeffs;
    const PerturbationData pert_solvable = flipped ? flip_orientation(pert) : pert;

    sink.report["alpha_target"] = cfg.solver.alpha_target;
    sink.report["orientation"] = flipped ? "flipped" : "standard";
    if (cfg.perturbation.seed)
        sink.report["perturbation_seed"] =
            sink.opts.seed_override.value_or(*cfg.perturbation.seed);
    if (cfg.family)
        sink.report["family_seed"] = sink.opts.seed_override.value_or(cfg.family->seed);

    try {
        const auto result = solve_fbsde(solvable, dom, pert_solvable, cfg.solver.alpha_target,
                                        cfg.solver.options, cfg.topology);
        // residual is measured on the system actually solved
        const CoefficientSet blended = blend_alpha(solvable, dom, cfg.solver.alpha_target);
        const auto rec = residual(blended, pert_solvable, result.solution, cfg.topology);
        const SolutionPair sol =
            flipped ? unflip_solution(result.solution) : result.solution;

        sink.report["solution"] = Json{{"x", process_json(sol.x)}, {"y", process_json(sol.y)}};
        sink.report["diagnostics"] = diagnostics_json(result.diagnostics);
        sink.report["residual"] = residual_json(rec);
        sink.diagnostics = result.diagnostics;
        append_process_rows(sink.rows, "x", sol.x);
        append_process_rows(sink.rows, "y", sol.y);
        sink.say(fmt_line("fbsde: residual=%.3e levels=%.0f base_solves=%.0f", rec.overall,
                          static_cast<double>(result.diagnostics.levels.size()),
                          static_cast<double>(result.diagnostics.base_solves)));
        if (!sink.opts.quiet)
            std::cerr << fmt_line("fbsde: wall=%.3fs", result.diagnostics.wall_seconds) << "\n";
        return 0;
    } catch (const ConvergenceError& e) {
        sink.report["error"] = e.what();
        sink.report["diagnostics"] = diagnostics_json(e.diagnostics);
        sink.diagnostics = e.diagnostics;
    } catch (const ResourceError& e) {
        sink.report["error"] = e.what();
        sink.report["diagnostics"] = diagnostics_json(e.diagnostics);
        sink.diagnostics = e.diagnostics;
    }
    sink.say("fbsde: solver failed, partial diagnostics written");
    return 3;
}

int run_check(const ExperimentConfig& cfg, Sink& sink) {
    auto [coeffs, dom] = cfg.build_system(sink.opts.seed_override);
    const std::uint64_t seed = sink.opts.seed_override.value_or(cfg.check.seed);
    const auto rep = check_conditions(coeffs, dom, cfg.topology, cfg.check.samples, seed,
                                      cfg.check.tolerance, cfg.check.orientation);
    sink.report["check_seed"] = seed;
    sink.report["samples"] = cfg.check.samples;
    sink.report["tolerance"] = cfg.check.tolerance;
    sink.report["condition_report"] = condition_report_json(rep);
    sink.say(fmt_line("check: violations=%.0f worst_coupling_slack=%.3e",
                      static_cast<double>(rep.total_violations()),
                      rep.mono_coupling.worst_slack));
    return 0;
}

int run_flq(const ExperimentConfig& cfg, Sink& sink) {
    const ForwardLqData data = cfg.build_flq();
    try {
        const auto sol = solve_flq(data, cfg.solver.options);
        const auto oracle = oracle_flq(data);
        double ctrl_err = (sol.xi - oracle.xi).norm();
        for (int k = 0; k < cfg.topology.horizon(); ++k)
            ctrl_err =
                std::max(ctrl_err, (sol.u.field(k) - oracle.u.field(k)).cwiseAbs().maxCoeff());
        sink.report["xi"] = vector_json(sol.xi);
        sink.report["cost"] = sol.cost;
        sink.report["stationarity"] = sol.stationarity;
        sink.report["oracle"] = Json{{"cost", oracle.cost},
                                     {"gradient_norm", oracle.gradient_norm},
                                     {"control_error", ctrl_err}};
        sink.report["diagnostics"] = diagnostics_json(sol.diagnostics);
        sink.diagnostics = sol.diagnostics;
        append_process_rows(sink.rows, "u", sol.u);
        append_process_rows(sink.rows, "x", sol.x);
        append_process_rows(sink.rows, "y", sol.y);
        sink.say(fmt_line("flq: cost=%.12g xi[0]=%.12g stationarity=%.3e", sol.cost, sol.xi(0),
                          sol.stationarity));
        return 0;
    } catch (const ConvergenceError& e) {
        sink.report["error"] = e.what();
        sink.report["diagnostics"] = diagnostics_json(e.diagnostics);
        sink.diagnostics = e.diagnostics;
    } catch (const ResourceError& e) {
        sink.report["error"] = e.what();
        sink.report["diagnostics"] = diagnostics_json(e.diagnostics);
        sink.diagnostics = e.diagnostics;
    }
    sink.say("flq: solver failed, partial diagnostics written");
    return 3;
}

int run_blq(const ExperimentConfig& cfg, Sink& sink) {
    const BackwardLqData data = cfg.build_blq();
    try {
        const auto sol = solve_blq(data, cfg.solver.options);
        const auto oracle = oracle_blq(data);
        double ctrl_err = 0.0;
        for (int k = 0; k < cfg.topology.horizon(); ++k)
            ctrl_err =
                std::max(ctrl_err, (sol.v.field(k) - oracle.v.field(k)).cwiseAbs().maxCoeff());
        sink.report["cost"] = sol.cost;
        sink.report["stationarity"] = sol.stationarity;
        sink.report["oracle"] = Json{{"cost", oracle.cost},
                                     {"gradient_norm", oracle.gradient_norm},
                                     {"control_error", ctrl_err}};
        sink.report["diagnostics"] = diagnostics_json(sol.diagnostics);
        sink.diagnostics = sol.diagnostics;
        append_process_rows(sink.rows, "v", sol.v);
        append_process_rows(sink.rows, "x", sol.x);
        append_process_rows(sink.rows, "y", sol.y);
        sink.say(fmt_line("blq: cost=%.12g stationarity=%.3e", sol.cost, sol.stationarity));
        return 0;
    } catch (const ConvergenceError& e) {
        sink.report["error"] = e.what();
        sink.report["diagnostics"] = diagnostics_json(e.diagnostics);
        sink.diagnostics = e.diagnostics;
    } catch (const ResourceError& e) {
        sink.report["error"] = e.what();
        sink.report["diagnostics"] = diagnostics_json(e.diagnostics);
        sink.diagnostics = e.diagnostics;
    }
    sink.say("blq: solver failed, partial diagnostics written");
    return 3;
}

int run_insurance(const ExperimentConfig& cfg, Sink& sink) {
    const InsuranceSpec& spec = *cfg.insurance;
    const int N = cfg.topology.horizon();
    ControlProcess u(cfg.topology, 1, 0, N - 1);
    if (spec.u_seed) {
        u = random_adapted(cfg.topology, 1, 0, N - 1,
                           sink.opts.seed_override.value_or(*spec.u_seed));
        sink.report["u_seed"] = sink.opts.seed_override.value_or(*spec.u_seed);
    } else {
        for (int k = 0; k < N; ++k)
            u.field(k).setConstant((*spec.u_per_step)[static_cast<std::size_t>(k)]);
    }
    const auto path = insurance_demo(cfg.topology, spec.params, u);

    sink.report["residual"] = path.residual;
    sink.report["wealth"] = process_json(path.wealth);
    Json liab = Json::array();
    for (std::size_t k = 0; k < path.liability.size(); ++k) {
        Json level = Json::array();
        for (Eigen::Index c = 0; c < path.liability[k].cols(); ++c)
            level.push_back(path.liability[k](0, c));
        liab.push_back(std::move(level));
    }
    sink.report["liability"] = std::move(liab);
    append_process_rows(sink.rows, "wealth", path.wealth);
    for (std::size_t k = 0; k < path.liability.size(); ++k)
        for (Eigen::Index c = 0; c < path.liability[k].cols(); ++c)
            sink.rows.push_back(
                TrajectoryRow{"liability", static_cast<int>(k), c, 0, path.liability[k](0, c)});
    sink.say(fmt_line("insurance: residual=%.3e y0[0]=%.9g", path.residual,
                      path.liability[0](0, 0)));
    return 0;
}

int run_suite(const ExperimentConfig& cfg, Sink& sink) {
    const std::uint64_t seed = sink.opts.seed_override.value_or(cfg.suite.seed);
    const auto results = acceptance::run(cfg.suite.criteria, seed);
    sink.report["suite_seed"] = seed;
    Json rows = Json::array();
    bool all_pass = true;
    for (const auto& r : results) {
        Json e;
        e["id"] = r.id;
        e["name"] = r.name;
        e["pass"] = r.pass;
        e["details"] = r.details;
        rows.push_back(std::move(e));
        all_pass = all_pass && r.pass;
        sink.say(acceptance::format_line(r));
    }
    sink.report["criteria"] = std::move(rows);
    sink.report["all_pass"] = all_pass;
    sink.say(all_pass ? "suite: all criteria passed" : "suite: FAILURES present");
    return all_pass ? 0 : 1;
}

}  // namespace

int run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
    Sink sink{cfg, opts, header(cfg, opts.seed_override), {}, std::nullopt};
    int status = 0;
    switch (cfg.mode) {
        case Mode::Sde: status = run_sde(cfg, sink); break;
        case Mode::Bsde: status = run_bsde(cfg, sink); break;
        case Mode::Fbsde: status = run_fbsde(cfg, sink); break;
        case Mode::Check: status = run_check(cfg, sink); break;
        case Mode::Flq: status = run_flq(cfg, sink); break;
        case Mode::Blq: status = run_blq(cfg, sink); break;
        case Mode::Insurance: status = run_insurance(cfg, sink); break;
        case Mode::Suite: status = run_suite(cfg, sink); break;
    }
    sink.flush();
    return status;
}

}  // namespace sdetree::cli
