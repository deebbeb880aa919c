#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cli/config.hpp"
#include "cli/runner.hpp"

namespace {

int dispatch(const std::string& path, const sdetree::cli::RunOptions& opts, bool suite_only,
             bool validate_only) {
    using namespace sdetree;
    try {
        const cli::ExperimentConfig cfg = cli::load_config(path);
        if (validate_only) {
            if (!opts.quiet) std::cout << "valid: " << path << "\n";
            return 0;
        }
        if (suite_only && cfg.mode != cli::Mode::Suite) {
            std::cerr << "error: 'suite' expects a config with mode \"suite\"\n";
            return 2;
        }
        return cli::run_experiment(cfg, opts);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ConvergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const ResourceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const SolvabilityError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"scenario-tree solvers for coupled forward-backward stochastic difference "
                 "equations"};
    app.require_subcommand(1);

    std::string path;
    sdetree::cli::RunOptions opts;
    std::optional<std::uint64_t> seed;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("config", path, "experiment config file")->required();
        cmd->add_option("--out", opts.out_dir, "output directory for reports");
        cmd->add_option("--seed", seed, "override every seed in the config");
        cmd->add_flag("--quiet", opts.quiet, "suppress progress output");
    };

    CLI::App* run = app.add_subcommand("run", "execute the config's mode");
    add_common(run);
    CLI::App* suite = app.add_subcommand("suite", "run an acceptance suite config");
    add_common(suite);
    CLI::App* validate = app.add_subcommand("validate", "parse and validate a config");
    add_common(validate);

    CLI11_PARSE(app, argc, argv);
    opts.seed_override = seed;

    if (app.got_subcommand(run)) return dispatch(path, opts, false, false);
    if (app.got_subcommand(suite)) return dispatch(path, opts, true, false);
    return dispatch(path, opts, false, true);
}
