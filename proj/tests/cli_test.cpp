#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "cli/config.hpp"
#include "cli/runner.hpp"

using namespace sdetree;
using namespace sdetree::cli;

namespace {

std::string data_path(const std::string& name) {
    return std::string(SDETREE_DATA_DIR) + "/" + name;
}

std::string work_path(const std::string& name) {
    std::filesystem::create_directories(SDETREE_WORK_DIR);
    return std::string(SDETREE_WORK_DIR) + "/" + name;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(bool(in));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Json read_report(const std::string& dir) {
    return Json::parse(slurp(dir + "/report.json"));
}

int spawn(const std::string& args) {
    const std::string cmd =
        std::string(SDETREE_CLI_PATH) + " " + args + " >/dev/null 2>/dev/null";
    const int rc = std::system(cmd.c_str());
    REQUIRE(rc != -1);
    return WEXITSTATUS(rc);
}

}  // namespace

TEST_CASE("config validation rejects malformed documents") {
    CHECK_THROWS_AS(load_config(data_path("bad_missing_horizon.json")), UsageError);
    try {
        load_config(data_path("bad_missing_horizon.json"));
    } catch (const UsageError& e) {
        CHECK(std::string(e.what()).find("horizon") != std::string::npos);
    }

    // unknown keys are rejected anywhere
    Json doc = Json::parse(slurp(data_path("flq_hand.json")));
    doc["surprise"] = 1;
    CHECK_THROWS_AS(parse_config(doc), UsageError);
    doc.erase("surprise");
    doc["flq"]["bogus"] = 2;
    CHECK_THROWS_AS(parse_config(doc), UsageError);

    // empty suite selection is a validation failure
    CHECK_THROWS_AS(load_config(data_path("suite_empty.json")), UsageError);
}

TEST_CASE("flq hand config reproduces the frozen optimum through the runner") {
    const auto cfg = load_config(data_path("flq_hand.json"));
    RunOptions opts;
    opts.out_dir = work_path("flq_hand");
    opts.quiet = true;
    CHECK(run_experiment(cfg, opts) == 0);

    const Json rep = read_report(opts.out_dir);
    CHECK(rep.at("mode") == "flq");
    CHECK(rep.at("xi")[0].get<double>() == doctest::Approx(-1.0 / 3.0).epsilon(1e-10));
    CHECK(rep.at("cost").get<double>() == doctest::Approx(1.0 / 6.0).epsilon(1e-10));
    CHECK(rep.at("oracle").at("control_error").get<double>() <= 1e-8);
}

TEST_CASE("check config reports zero violations for the built-in family") {
    const auto cfg = load_config(data_path("check_family.json"));
    RunOptions opts;
    opts.out_dir = work_path("check_family");
    opts.quiet = true;
    CHECK(run_experiment(cfg, opts) == 0);
    const Json rep = read_report(opts.out_dir);
    CHECK(rep.at("condition_report").at("total_violations").get<long>() == 0);
}

TEST_CASE("reports are byte-identical across runs with the same seeds") {
    const auto cfg = load_config(data_path("fbsde_family.json"));
    RunOptions a, b;
    a.out_dir = work_path("det_a");
    b.out_dir = work_path("det_b");
    a.quiet = b.quiet = true;
    CHECK(run_experiment(cfg, a) == 0);
    CHECK(run_experiment(cfg, b) == 0);
    CHECK(slurp(a.out_dir + "/report.json") == slurp(b.out_dir + "/report.json"));
    CHECK(slurp(a.out_dir + "/trajectories.csv") == slurp(b.out_dir + "/trajectories.csv"));
    CHECK(slurp(a.out_dir + "/diagnostics.csv") == slurp(b.out_dir + "/diagnostics.csv"));

    // the seed override changes the data and is recorded in the report
    RunOptions c;
    c.out_dir = work_path("det_c");
    c.quiet = true;
    c.seed_override = 99;
    CHECK(run_experiment(cfg, c) == 0);
    const Json rep = read_report(c.out_dir);
    CHECK(rep.at("seed_override").get<std::uint64_t>() == 99);
    CHECK(rep.at("family_seed").get<std::uint64_t>() == 99);
    CHECK(slurp(a.out_dir + "/report.json") != slurp(c.out_dir + "/report.json"));
}

TEST_CASE("fbsde mode solves the flipped orientation through the transform") {
    Json doc = Json::parse(slurp(data_path("fbsde_family.json")));
    // emit a sign-negated family (flipped orientation) and tell the solver so
    doc["coefficients"]["family"]["orientation"] = "flipped";
    doc["solver"]["orientation"] = "flipped";
    const auto cfg = parse_config(doc);
    RunOptions opts;
    opts.out_dir = work_path("fbsde_flipped");
    opts.quiet = true;
    CHECK(run_experiment(cfg, opts) == 0);
    const Json rep = read_report(opts.out_dir);
    CHECK(rep.at("residual").at("overall").get<double>() <= 1e-8);
    CHECK(rep.at("orientation") == "flipped");
}

TEST_CASE("insurance and sde modes write trajectories") {
    for (const char* name : {"insurance.json", "sde_affine.json"}) {
        const auto cfg = load_config(data_path(name));
        RunOptions opts;
        opts.out_dir = work_path(std::string("mode_") + name);
        opts.quiet = true;
        CHECK(run_experiment(cfg, opts) == 0);
        const std::string csv = slurp(opts.out_dir + "/trajectories.csv");
        CHECK(csv.find("var,k,node,component,value") == 0);
        CHECK(csv.size() > 40);
    }
}

TEST_CASE("mild affine config solves through the runner") {
    Json doc = Json::parse(slurp(data_path("fbsde_stiff.json")));
    // soften the cross coupling so the flat step contracts
    for (auto& step : doc["coefficients"]["affine"]["steps"]) {
        step["driver"]["yp"] = Json::array({Json::array({0.5})});
        step["drift"]["x"] = Json::array({Json::array({-0.5})});
    }
    doc["solver"] = Json{{"tolerance", 1e-10}};
    const auto cfg = parse_config(doc);
    RunOptions opts;
    opts.out_dir = work_path("affine_mild");
    opts.quiet = true;
    CHECK(run_experiment(cfg, opts) == 0);
    const Json rep = read_report(opts.out_dir);
    CHECK(rep.at("residual").at("overall").get<double>() <= 1e-9);
}

TEST_CASE("non-contracting forced step exits 3 with partial diagnostics on disk") {
    const auto cfg = load_config(data_path("fbsde_stiff.json"));
    RunOptions opts;
    opts.out_dir = work_path("stiff");
    opts.quiet = true;
    CHECK(run_experiment(cfg, opts) == 3);
    const Json rep = read_report(opts.out_dir);
    CHECK(rep.contains("error"));
    CHECK(rep.at("diagnostics").at("alpha_grid").size() >= 1);
    CHECK(spawn("run " + data_path("fbsde_stiff.json") + " --out " + work_path("stiff_bin") +
                " --quiet") == 3);
}

TEST_CASE("binary exit codes: 0 run, 2 validation, suite subset") {
    CHECK(spawn("run " + data_path("flq_hand.json") + " --out " + work_path("bin_flq") +
                " --quiet") == 0);
    CHECK(spawn("validate " + data_path("flq_hand.json") + " --quiet") == 0);
    CHECK(spawn("run " + data_path("bad_missing_horizon.json") + " --out " +
                work_path("bin_bad") + " --quiet") == 2);
    CHECK(spawn("validate " + data_path("bad_missing_horizon.json")) == 2);
    CHECK(spawn("suite " + data_path("flq_hand.json") + " --quiet") == 2);
    CHECK(spawn("suite " + data_path("suite_small.json") + " --out " + work_path("bin_suite") +
                " --quiet") == 0);
    CHECK(spawn("run " + data_path("suite_empty.json")) == 2);
}
