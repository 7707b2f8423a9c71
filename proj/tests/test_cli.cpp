#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "commands.hpp"
#include "reports.hpp"
#include "run_config.hpp"

using namespace ssep::cli;
namespace fs = std::filesystem;

namespace {

struct RunResult {
    int status = -1;
    std::string out;
};

// Runs the CLI through the shell; stderr is discarded.
RunResult run_cli(const std::string& args, const std::string& env = {}) {
    const std::string cmd = env + (env.empty() ? "" : " ") + SSEP_CLI_PATH + std::string(" ") + args + " 2>/dev/null";
    RunResult r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
    const int raw = pclose(pipe);
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    return r;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("ssep_cli_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> lines(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> out;
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

std::vector<std::vector<double>> csv_numbers(const fs::path& p) {
    auto ls = lines(p);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 1; i < ls.size(); ++i) {
        std::vector<double> row;
        std::stringstream ss(ls[i]);
        for (std::string cell; std::getline(ss, cell, ',');) row.push_back(std::stod(cell));
        rows.push_back(row);
    }
    return rows;
}

double a_cov(double t, double s) { return 0.5 * (std::sqrt(t) + std::sqrt(s) - std::sqrt(std::abs(t - s))); }

}  // namespace

TEST(Config, DefaultsResolveWithoutFile) {
    const auto doc = resolve_document(std::nullopt, nullptr, json::object());
    const auto c = config_from_document(doc);
    EXPECT_EQ(c.model.rho, 0.5);
    EXPECT_EQ(c.io.format, "csv");
    EXPECT_FALSE(c.probe.master_seed.has_value());
}

TEST(Config, RejectsUnknownKeysSectionsAndVersions) {
    EXPECT_THROW(config_from_document(json{{"schema_version", 1}, {"model", {{"rhoo", 0.5}}}}), ConfigError);
    EXPECT_THROW(config_from_document(json{{"schema_version", 1}, {"extras", json::object()}}), ConfigError);
    EXPECT_THROW(config_from_document(json{{"schema_version", 2}}), ConfigError);
    EXPECT_THROW(config_from_document(json{{"model", {{"rho", 0.5}}}}), ConfigError);
}

TEST(Config, RejectsWrongTypesAndValues) {
    EXPECT_THROW(config_from_document(json{{"schema_version", 1}, {"model", {{"L", 10.5}}}}), ConfigError);
    EXPECT_THROW(config_from_document(json{{"schema_version", 1}, {"probe", {{"master_seed", -1}}}}), ConfigError);
    EXPECT_THROW(config_from_document(json{{"schema_version", 1}, {"io", {{"format", "xml"}}}}), ConfigError);
    EXPECT_THROW(config_from_document(json{{"schema_version", 1}, {"model", {{"grid", "soon"}}}}), ConfigError);
    EXPECT_THROW(
        config_from_document(json{{"schema_version", 1}, {"model", {{"initial", "bernoulli"}, {"observable", "tagged"}}}}),
        ConfigError);
}

TEST(Config, EnvironmentThenFlagsOverrideTheFile) {
    const fs::path dir = scratch("precedence");
    fs::create_directories(dir);
    {
        std::ofstream f(dir / "run.json");
        f << R"({"schema_version": 1, "model": {"rho": 0.3, "grid": [1, 2]}, "probe": {"replicas": 20}})";
    }
    std::string e1 = "SSEP_MODEL_RHO=0.7", e2 = "SSEP_MODEL_GRID=5,10,20", e3 = "PATH=/bin";
    std::vector<char*> env{e1.data(), e2.data(), e3.data(), nullptr};
    json flags;
    flags["probe"]["replicas"] = 99;
    const auto c = config_from_document(resolve_document((dir / "run.json").string(), env.data(), flags));
    EXPECT_EQ(c.model.rho, 0.7);
    EXPECT_EQ(c.model.grid, (std::vector<double>{5, 10, 20}));
    EXPECT_EQ(c.probe.replicas, 99u);

    json rho_flag;
    rho_flag["model"]["rho"] = 0.2;
    EXPECT_EQ(config_from_document(resolve_document((dir / "run.json").string(), env.data(), rho_flag)).model.rho, 0.2);
}

TEST(Config, UnknownEnvironmentOverrideIsAnError) {
    std::string e = "SSEP_MODEL_DENSITY=0.5";
    std::vector<char*> env{e.data(), nullptr};
    EXPECT_THROW(resolve_document(std::nullopt, env.data(), json::object()), ConfigError);
}

TEST(Config, EchoOmitsRunLocalSettings) {
    RunConfig a, b;
    b.io.out_dir = "elsewhere";
    b.probe.threads = 7;
    EXPECT_EQ(to_json(a), to_json(b));
    b.probe.master_seed = 3;
    EXPECT_NE(to_json(a), to_json(b));
}

TEST(Tables, ShortestRoundTripNumbers) {
    EXPECT_EQ(fmt(0.1), "0.1");
    EXPECT_EQ(fmt(100.0), "100");
    EXPECT_EQ(std::stod(fmt(2.5066282746310002)), 2.5066282746310002);
    EXPECT_EQ(fmt(-std::numeric_limits<double>::infinity()), "-inf");
    std::ostringstream csv, jl;
    TableWriter a(csv, {"x", "y"}, false);
    a.row({1.5, cell(std::numeric_limits<double>::infinity())});
    EXPECT_EQ(csv.str(), "x,y\n1.5,inf\n");
    TableWriter b(jl, {"x", "y"}, true);
    b.row({1.5, 2});
    EXPECT_EQ(jl.str(), "{\"x\":1.5,\"y\":2}\n");
}

TEST(CliRate, WorkedValues) {
    auto r = run_cli("rate --times 1 --alphas 1 --mode raw");
    ASSERT_EQ(r.status, exit_ok);
    EXPECT_DOUBLE_EQ(json::parse(r.out)["value"].get<double>(), 0.5);

    r = run_cli("rate --times 1 --alphas 1 --mode current --rho 0.5");
    ASSERT_EQ(r.status, exit_ok);
    // 0.5 / (sqrt(2/pi) * 1/4)
    EXPECT_NEAR(json::parse(r.out)["value"].get<double>(), 2.5066, 1e-4);

    r = run_cli("rate --times 1 4 --alphas 1 1 --mode raw");
    ASSERT_EQ(r.status, exit_ok);
    // A = [[1, a], [a, 2]] with a = a(1,4); alpha^T A^{-1} alpha = (2 - 2a + 1) / (2 - a^2)
    const double a14 = a_cov(1, 4);
    EXPECT_NEAR(json::parse(r.out)["value"].get<double>(), (3 - 2 * a14) / (2 * (2 - a14 * a14)), 1e-12);
    EXPECT_NEAR(json::parse(r.out)["value"].get<double>(), 0.5419, 1e-4);
}

TEST(CliRate, DuplicateTimesAreAConfigError) {
    EXPECT_EQ(run_cli("rate --times 1 1 --alphas 1 1").status, exit_config);
    EXPECT_EQ(run_cli("rate --times 1 --alphas 1 2").status, exit_config);
}

TEST(CliSimulate, MinimalConfigWritesRowsAndManifest) {
    const fs::path dir = scratch("sim_minimal");
    const auto r = run_cli("simulate --rho 0.5 --L 512 --grid 100 --replicas 10 --seed 7 --out " + dir.string());
    ASSERT_EQ(r.status, exit_ok);
    const auto ls = lines(dir / "paths.csv");
    ASSERT_EQ(ls.size(), 11u);
    EXPECT_EQ(ls[0], "replica,seed,t,X,J");
    ASSERT_TRUE(fs::exists(dir / "manifest.json"));
    const json m = json::parse(slurp(dir / "manifest.json"));
    EXPECT_EQ(m["master_seed"], 7);
    EXPECT_EQ(m["rows"], 10);
    EXPECT_EQ(m["guard"]["L"], 512);
    EXPECT_TRUE(m.contains("wall_time_s"));
    EXPECT_EQ(m["schema_version"], schema_version);
}

TEST(CliSimulate, RerunIsByteIdentical) {
    const fs::path a = scratch("sim_a"), b = scratch("sim_b");
    const std::string args = "simulate --rho 0.4 --L 512 --grid 10 50 --replicas 25 --seed 99 --format jsonl --out ";
    ASSERT_EQ(run_cli(args + a.string()).status, exit_ok);
    ASSERT_EQ(run_cli(args + b.string() + " --threads 3").status, exit_ok);
    EXPECT_EQ(slurp(a / "paths.jsonl"), slurp(b / "paths.jsonl"));
    EXPECT_EQ(lines(a / "paths.jsonl").size(), 50u);
}

TEST(CliSimulate, GuardAndSeedErrors) {
    EXPECT_EQ(run_cli("simulate --L 64 --grid 100 --replicas 10 --seed 1 --out " + scratch("sim_guard").string()).status,
              exit_guard);
    EXPECT_EQ(run_cli("simulate --L 512 --grid 100 --replicas 10 --out " + scratch("sim_noseed").string()).status,
              exit_config);
    EXPECT_EQ(run_cli("simulate --L 512 --grid 100 --replicas 10 --seed 1 --out /proc/ssep_denied").status, exit_config);
}

TEST(CliSimulate, SeedFromEnvironment) {
    const fs::path dir = scratch("sim_env");
    EXPECT_EQ(run_cli("simulate --L 512 --grid 100 --replicas 3 --out " + dir.string(), "SSEP_PROBE_MASTER_SEED=5").status,
              exit_ok);
    EXPECT_EQ(json::parse(slurp(dir / "manifest.json"))["master_seed"], 5);
}

TEST(CliProbe, SummaryAndTailsAreThreadIndependent) {
    const fs::path a = scratch("probe_a"), b = scratch("probe_b");
    const std::string args = "probe --rho 0.5 --L 1024 --grid 25 100 --replicas 200 --seed 4 --out ";
    ASSERT_EQ(run_cli(args + a.string() + " --threads 1").status, exit_ok);
    ASSERT_EQ(run_cli(args + b.string() + " --threads 4").status, exit_ok);
    EXPECT_EQ(slurp(a / "summary.json"), slurp(b / "summary.json"));
    EXPECT_EQ(slurp(a / "tails.csv"), slurp(b / "tails.csv"));
    const json s = json::parse(slurp(a / "summary.json"));
    EXPECT_TRUE(s["observables"].contains("current"));
    EXPECT_TRUE(s["observables"].contains("tagged"));
    EXPECT_EQ(s["observables"]["current"]["summary"]["n"], 200);
    EXPECT_TRUE(s["observables"]["tagged"].contains("fbm_comparison"));
}

TEST(CliMinimizer, SingleTimeCurveAndReport) {
    const fs::path dir = scratch("mini_single");
    const double t = 1.0, alpha = 1.5, T = 2.0;
    ASSERT_EQ(run_cli("minimizer --times 1 --alphas 1.5 --T 2 --rho 0.3 --out " + dir.string()).status, exit_ok);
    const auto rows = csv_numbers(dir / "k_origin.csv");
    ASSERT_EQ(rows.size(), 64u);
    for (const auto& r : rows) {
        const double expected = alpha * a_cov(t, r[0]) / std::sqrt(t);
        EXPECT_NEAR(r[1], expected, 1e-5) << r[0];
        EXPECT_NEAR(r[2], expected, 1e-12) << r[0];
    }
    const json q = json::parse(slurp(dir / "q_report.json"));
    const double chi = 0.3 * 0.7;
    const double closed = std::sqrt(2 * M_PI) * alpha * alpha / (4 * chi * std::sqrt(t));
    for (const char* route : {"parseval", "real_space", "closed_form"})
        EXPECT_NEAR(q["routes"][route].get<double>(), closed, 1e-3 * closed) << route;
    EXPECT_TRUE(q["pass"].get<bool>());
    EXPECT_LE(q["max_relative_spread"].get<double>(), 1e-3);
}

TEST(CliMinimizer, ZeroConstraintGivesZeroProfiles) {
    const fs::path dir = scratch("mini_zero");
    ASSERT_EQ(run_cli("minimizer --times 0.5 --alphas 0 --T 1 --out " + dir.string()).status, exit_ok);
    for (const char* f : {"k_origin.csv", "profiles.csv"})
        for (const auto& row : csv_numbers(dir / f))
            for (std::size_t k = 1; k < row.size(); ++k)
                if (!(std::string(f) == "profiles.csv" && k == 1)) ASSERT_EQ(row[k], 0.0) << f;
    const json q = json::parse(slurp(dir / "q_report.json"));
    EXPECT_EQ(q["routes"]["closed_form"].get<double>(), 0.0);
}

TEST(CliMinimizer, InvalidQueriesAreConfigErrors) {
    EXPECT_EQ(run_cli("minimizer --times 2 1 --alphas 1 1 --T 3 --out " + scratch("mini_bad").string()).status,
              exit_config);
    EXPECT_EQ(run_cli("minimizer --times 1 --alphas 1 --T 0.5 --out " + scratch("mini_bad2").string()).status,
              exit_config);
}

TEST(CliVerify, SuitesPassAndReportIsMachineReadable) {
    auto r = run_cli("verify --suite micro --micro-runs 10 --seed 2");
    ASSERT_EQ(r.status, exit_ok);
    json j = json::parse(r.out);
    EXPECT_TRUE(j["pass"].get<bool>());
    EXPECT_EQ(j["checks"].size(), 5u);
    r = run_cli("verify --suite fourier");
    ASSERT_EQ(r.status, exit_ok);
    EXPECT_TRUE(json::parse(r.out)["pass"].get<bool>());
}

TEST(CliVerify, CorruptedLedgerFailsWithNamedInvariant) {
    const auto r = run_cli("verify --suite micro --micro-runs 3 --seed 2 --corrupt-ledger");
    EXPECT_EQ(r.status, exit_verify);
    const json j = json::parse(r.out);
    EXPECT_FALSE(j["pass"].get<bool>());
    const auto failed = j["failed"].get<std::vector<std::string>>();
    EXPECT_NE(std::find(failed.begin(), failed.end(), "micro.conservation"), failed.end());
}

TEST(CliVerify, RandomizedSuitesNeedASeed) {
    EXPECT_EQ(run_cli("verify --suite micro").status, exit_config);
    EXPECT_EQ(run_cli("verify --suite nonsense --seed 1").status, exit_config);
}
