#pragma once

#include <optional>
#include <string>

#include "cli/config.hpp"

namespace sdetree::cli {

struct RunOptions {
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed_override;
    bool quiet = false;
};

/// Executes the config's mode and writes report + tabular exports.
/// Returns the process exit status: 0 success, 2 validation failure,
/// 3 solver non-convergence (partial diagnostics still written).
int run_experiment(const ExperimentConfig& cfg, const RunOptions& opts);

}  // namespace sdetree::cli
