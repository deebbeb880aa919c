#include "cli/report.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>

namespace sdetree::cli {

Json topology_json(const TreeTopology& topo) {
    Json j;
    j["horizon"] = topo.horizon();
    j["branching"] = topo.branching();
    j["support"] = std::vector<double>(topo.support().data(),
                                       topo.support().data() + topo.support().size());
    j["prob"] = std::vector<double>(topo.probabilities().data(),
                                    topo.probabilities().data() + topo.probabilities().size());
    return j;
}

Json residual_json(const ResidualRecord& rec) {
    Json j;
    j["forward"] = rec.forward;
    j["backward"] = rec.backward;
    j["initial"] = rec.initial;
    j["terminal"] = rec.terminal;
    j["overall"] = rec.overall;
    return j;
}

Json diagnostics_json(const SolveDiagnostics& diag) {
    Json j;
    j["alpha_grid"] = diag.alpha_grid;
    Json levels = Json::array();
    for (const auto& l : diag.levels) {
        Json e;
        e["alpha"] = l.alpha;
        e["step"] = l.step;
        e["iterations"] = l.iterations;
        e["contraction"] = l.contraction;
        levels.push_back(std::move(e));
    }
    j["levels"] = std::move(levels);
    j["residual"] = diag.residual;
    j["base_solves"] = diag.base_solves;
    return j;
}

namespace {

Json stat_json(const InequalityStat& s) {
    Json j;
    j["checked"] = s.checked;
    j["violations"] = s.violations;
    j["worst_slack"] = s.worst_slack;
    return j;
}

}  // namespace

Json condition_report_json(const ConditionReport& rep) {
    Json j;
    j["orientation"] = rep.orientation == Orientation::Standard ? "standard" : "flipped";
    Json dom;
    dom["initial"] = stat_json(rep.dom_initial);
    dom["terminal"] = stat_json(rep.dom_terminal);
    dom["driver"] = stat_json(rep.dom_driver);
    dom["drift"] = stat_json(rep.dom_drift);
    dom["diffusion"] = stat_json(rep.dom_diffusion);
    j["domination"] = std::move(dom);
    Json mono;
    mono["initial"] = stat_json(rep.mono_initial);
    mono["terminal"] = stat_json(rep.mono_terminal);
    mono["coupling"] = stat_json(rep.mono_coupling);
    j["monotonicity"] = std::move(mono);
    Json lip;
    lip["initial"] = rep.lip_initial;
    lip["terminal"] = rep.lip_terminal;
    lip["driver"] = rep.lip_driver;
    lip["drift"] = rep.lip_drift;
    lip["diffusion"] = rep.lip_diffusion;
    j["lipschitz_empirical"] = std::move(lip);
    j["total_violations"] = rep.total_violations();
    return j;
}

Json vector_json(const Vec& v) {
    return Json(std::vector<double>(v.data(), v.data() + v.size()));
}

Json process_json(const AdaptedProcess& p) {
    Json j = Json::array();
    for (int k = p.first_time(); k <= p.last_time(); ++k) {
        const Mat& f = p.field(k);
        Json level = Json::array();
        for (Eigen::Index c = 0; c < f.cols(); ++c) {
            Json node = Json::array();
            for (Eigen::Index r = 0; r < f.rows(); ++r) node.push_back(f(r, c));
            level.push_back(std::move(node));
        }
        j.push_back(std::move(level));
    }
    return j;
}

void append_process_rows(std::vector<TrajectoryRow>& rows, const std::string& var,
                         const AdaptedProcess& p) {
    for (int k = p.first_time(); k <= p.last_time(); ++k) {
        const Mat& f = p.field(k);
        for (Eigen::Index c = 0; c < f.cols(); ++c)
            for (Eigen::Index r = 0; r < f.rows(); ++r)
                rows.push_back(TrajectoryRow{var, k, c, static_cast<int>(r), f(r, c)});
    }
}

void write_report(const std::string& path, const Json& doc) {
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write report file '" + path + "'");
    out << doc.dump(2) << "\n";
}

void write_trajectories(const std::string& path, const std::vector<TrajectoryRow>& rows) {
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write trajectory file '" + path + "'");
    out << "var,k,node,component,value\n";
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.17g", r.value);
        out << r.var << ',' << r.k << ',' << r.node << ',' << r.component << ',' << buf << '\n';
    }
}

void write_diagnostics_csv(const std::string& path, const SolveDiagnostics& diag) {
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write diagnostics file '" + path + "'");
    out << "level,alpha,step,iterations,contraction\n";
    char a[64], s[64], c[64];
    for (std::size_t i = 0; i < diag.levels.size(); ++i) {
        const auto& l = diag.levels[i];
        std::snprintf(a, sizeof a, "%.17g", l.alpha);
        std::snprintf(s, sizeof s, "%.17g", l.step);
        std::snprintf(c, sizeof c, "%.17g", l.contraction);
        out << i + 1 << ',' << a << ',' << s << ',' << l.iterations << ',' << c << '\n';
    }
}

}  // namespace sdetree::cli
