#pragma once

#include <string>
#include <vector>

#include "cli/config.hpp"

namespace sdetree::cli {

/// Rows of the flat trajectory export: var,k,node,component,value
struct TrajectoryRow {
    std::string var;
    int k = 0;
    std::int64_t node = 0;
    int component = 0;
    double value = 0.0;
};

Json topology_json(const TreeTopology& topo);
Json residual_json(const ResidualRecord& rec);
Json diagnostics_json(const SolveDiagnostics& diag);  // omits wall time, see docs
Json condition_report_json(const ConditionReport& rep);
Json process_json(const AdaptedProcess& p);
Json vector_json(const Vec& v);

void append_process_rows(std::vector<TrajectoryRow>& rows, const std::string& var,
                         const AdaptedProcess& p);

/// Writes the canonical report document (2-space indent, trailing newline).
void write_report(const std::string& path, const Json& doc);

void write_trajectories(const std::string& path, const std::vector<TrajectoryRow>& rows);

void write_diagnostics_csv(const std::string& path, const SolveDiagnostics& diag);

}  // namespace sdetree::cli
