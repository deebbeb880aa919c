#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "sdetree/continuation.hpp"
#include "sdetree/lq.hpp"

namespace sdetree::cli {

using Json = nlohmann::ordered_json;

enum class Mode { Sde, Bsde, Fbsde, Check, Flq, Blq, Insurance, Suite };

std::string mode_name(Mode m);

/// Affine per-step data for the standalone forward/backward equation modes.
struct SdeSpec {
    Vec initial;
    std::vector<AffineVecMap> drift, diffusion;  // one per step, x -> a x + c
};

struct BsdeSpec {
    Mat terminal;
    std::vector<AffineThetaMap> driver;  // x block ignored (driver takes y', z')
};

struct InsuranceSpec {
    InsuranceParams params;
    // the investment process: constant, per-step values, or seeded random
    std::optional<std::vector<double>> u_per_step;
    std::optional<std::uint64_t> u_seed;
};

struct SolverSpec {
    ContinuationOptions options;
    double alpha_target = 1.0;
    Orientation orientation = Orientation::Standard;
};

struct CheckSpec {
    long samples = 10000;
    std::uint64_t seed = 1;
    double tolerance = 1e-12;
    Orientation orientation = Orientation::Standard;
};

struct FamilySpec {
    int case_selector = 1;
    double gain = 0.0;
    std::uint64_t seed = 1;
    int channel_dim = 1;
    bool flipped = false;  // emit the sign-negated family (flipped orientation)
};

struct PerturbationSpec {
    std::optional<std::uint64_t> seed;  // seeded random when set
    double scale = 1.0;
};

struct SuiteSpec {
    std::vector<int> criteria;  // empty selection is a validation error
    std::uint64_t seed = 1;
};

struct OutputSpec {
    std::string report = "report.json";
    std::string trajectories = "trajectories.csv";
    std::string diagnostics = "diagnostics.csv";
};

/// Parsed and validated experiment configuration. Unknown keys anywhere in
/// the document are rejected.
struct ExperimentConfig {
    Mode mode = Mode::Fbsde;
    TreeTopology topology;
    int n = 1;
    int m = 1;

    std::optional<FamilySpec> family;
    std::optional<Json> affine;  // raw affine coefficient block, built on demand
    std::optional<Json> domination;
    PerturbationSpec perturbation;
    SolverSpec solver;
    CheckSpec check;
    std::optional<SdeSpec> sde;
    std::optional<BsdeSpec> bsde;
    std::optional<Json> flq;
    std::optional<Json> blq;
    std::optional<InsuranceSpec> insurance;
    SuiteSpec suite;
    OutputSpec output;

    /// Builds the coefficient system + domination data for fbsde/check modes.
    std::pair<CoefficientSet, DominationData> build_system(
        std::optional<std::uint64_t> seed_override) const;

    ForwardLqData build_flq() const;
    BackwardLqData build_blq() const;
};

/// Parses a config document; throws UsageError/ShapeError with the offending
/// config path in the message.
ExperimentConfig parse_config(const Json& doc);

/// Reads and parses a config file.
ExperimentConfig load_config(const std::string& path);

}  // namespace sdetree::cli
