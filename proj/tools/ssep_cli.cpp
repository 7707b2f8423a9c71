#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"

extern char** environ;

namespace {

using ssep::cli::json;

// Flags only override the document when they were given on the command line.
template <class T>
void override_if(json& patch, const CLI::Option* opt, const char* section, const char* key, const T& value) {
    if (opt->count() > 0) patch[section][key] = value;
}

}  // namespace

int main(int argc, char** argv) {
    using namespace ssep::cli;
    CLI::App app{"Symmetric simple exclusion: simulation, moderate-deviation rates and optimal paths"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, out_dir, format;
    std::uint64_t seed = 0;
    auto* o_config = app.add_option("--config", config_path, "JSON run document (schema_version 1)")->check(CLI::ExistingFile);
    auto* o_seed = app.add_option("--seed", seed, "master seed (required by simulate, probe and verify)");
    auto* o_out = app.add_option("--out", out_dir, "output directory");
    auto* o_format = app.add_option("--format", format, "table format")->check(CLI::IsMember({"csv", "jsonl"}));

    double rho = 0.5, T = 1.0, safety = 10.0, a_N = 1.0, xi_cutoff = 0.0, xi_step = 0.0, du = 0.0, dt = 0.0, U = 0.0;
    std::int64_t L = 0, N = 1;
    std::size_t replicas = 0, micro_runs = 50;
    unsigned threads = 0;
    std::vector<double> grid, times, alphas, tail_levels;
    std::string initial, observable, mode, suite = "all";
    bool corrupt_ledger = false;

    auto* sim = app.add_subcommand("simulate", "write an ensemble of (X, J) paths and a manifest");
    auto* s_rho = sim->add_option("--rho", rho, "density");
    auto* s_L = sim->add_option("--L", L, "ring size");
    auto* s_grid = sim->add_option("--grid", grid, "observation times");
    auto* s_rep = sim->add_option("--replicas", replicas, "number of replicas");
    auto* s_init = sim->add_option("--initial", initial, "initial law")->check(CLI::IsMember({"conditioned", "bernoulli"}));
    auto* s_thr = sim->add_option("--threads", threads, "worker threads (0: all cores)");
    auto* s_saf = sim->add_option("--safety", safety, "wrap-around guard safety factor");

    auto* probe = app.add_subcommand("probe", "fixed-time statistics, fBM covariance comparison and tail slopes");
    auto* p_rho = probe->add_option("--rho", rho, "density");
    auto* p_L = probe->add_option("--L", L, "ring size");
    auto* p_grid = probe->add_option("--grid", grid, "macroscopic observation times");
    auto* p_rep = probe->add_option("--replicas", replicas, "number of replicas");
    auto* p_obs = probe->add_option("--observable", observable, "observable")->check(CLI::IsMember({"current", "tagged", "both"}));
    auto* p_init = probe->add_option("--initial", initial, "initial law")->check(CLI::IsMember({"conditioned", "bernoulli"}));
    auto* p_thr = probe->add_option("--threads", threads, "worker threads (0: all cores)");
    auto* p_saf = probe->add_option("--safety", safety, "wrap-around guard safety factor");
    auto* p_aN = probe->add_option("--a-N", a_N, "deviation scale a_N");
    auto* p_N = probe->add_option("--N", N, "diffusive scale N");
    auto* p_lev = probe->add_option("--tail-levels", tail_levels, "tail levels in predicted standard deviations");

    auto* rate = app.add_subcommand("rate", "finite-dimensional rate function");
    auto* r_times = rate->add_option("--times", times, "constraint times");
    auto* r_alphas = rate->add_option("--alphas", alphas, "constraint values");
    auto* r_rho = rate->add_option("--rho", rho, "density (current and tagged modes)");
    auto* r_mode = rate->add_option("--mode", mode, "scaling")->check(CLI::IsMember({"raw", "current", "tagged"}));

    auto* mini = app.add_subcommand("minimizer", "optimal path profiles and the rate by three routes");
    auto* m_times = mini->add_option("--times", times, "constraint times");
    auto* m_alphas = mini->add_option("--alphas", alphas, "constraint values");
    auto* m_T = mini->add_option("--T", T, "horizon");
    auto* m_rho = mini->add_option("--rho", rho, "density");
    auto* m_cut = mini->add_option("--xi-cutoff", xi_cutoff, "frequency cutoff (0: automatic)");
    auto* m_step = mini->add_option("--xi-step", xi_step, "frequency step (0: automatic)");
    auto* m_du = mini->add_option("--du", du, "space step of the real-space profiles");
    auto* m_dt = mini->add_option("--dt", dt, "time step of the real-space profiles");
    auto* m_U = mini->add_option("--U", U, "half-width of the real-space profiles (0: 5 sqrt(T))");

    auto* ver = app.add_subcommand("verify", "run an invariant suite and report");
    ver->add_option("--suite", suite, "suite")->check(CLI::IsMember({"micro", "fourier", "field", "fbm", "all"}));
    ver->add_option("--micro-runs", micro_runs, "randomized runs in the micro suite");
    ver->add_flag("--corrupt-ledger", corrupt_ledger, "negative control: corrupt one current record");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_config;
    }

    try {
        json patch = json::object();
        override_if(patch, o_seed, "probe", "master_seed", seed);
        override_if(patch, o_out, "io", "out_dir", out_dir);
        override_if(patch, o_format, "io", "format", format);
        for (auto [opt, key] : {std::pair{s_rho, "rho"}, {p_rho, "rho"}, {r_rho, "rho"}, {m_rho, "rho"}})
            override_if(patch, opt, "model", key, rho);
        override_if(patch, s_L, "model", "L", L);
        override_if(patch, p_L, "model", "L", L);
        override_if(patch, s_grid, "model", "grid", grid);
        override_if(patch, p_grid, "model", "grid", grid);
        override_if(patch, s_rep, "probe", "replicas", replicas);
        override_if(patch, p_rep, "probe", "replicas", replicas);
        override_if(patch, s_init, "model", "initial", initial);
        override_if(patch, p_init, "model", "initial", initial);
        override_if(patch, p_obs, "model", "observable", observable);
        override_if(patch, s_thr, "probe", "threads", threads);
        override_if(patch, p_thr, "probe", "threads", threads);
        override_if(patch, s_saf, "model", "safety", safety);
        override_if(patch, p_saf, "model", "safety", safety);
        override_if(patch, p_aN, "probe", "a_N", a_N);
        override_if(patch, p_N, "probe", "N", N);
        override_if(patch, p_lev, "probe", "tail_levels", tail_levels);
        override_if(patch, r_times, "query", "times", times);
        override_if(patch, m_times, "query", "times", times);
        override_if(patch, r_alphas, "query", "alphas", alphas);
        override_if(patch, m_alphas, "query", "alphas", alphas);
        override_if(patch, r_mode, "query", "mode", mode);
        override_if(patch, m_T, "model", "T", T);
        override_if(patch, m_cut, "numerics", "xi_cutoff", xi_cutoff);
        override_if(patch, m_step, "numerics", "xi_step", xi_step);
        override_if(patch, m_du, "numerics", "du", du);
        override_if(patch, m_dt, "numerics", "dt", dt);
        override_if(patch, m_U, "numerics", "U", U);

        const json doc = resolve_document(o_config->count() ? std::optional<std::string>(config_path) : std::nullopt,
                                          environ, patch);
        const RunConfig cfg = config_from_document(doc);
        const bool out_named = doc.contains("io") && doc["io"].contains("out_dir");

        if (sim->parsed()) return cmd_simulate(cfg, std::cerr);
        if (probe->parsed()) return cmd_probe(cfg, std::cerr);
        if (rate->parsed()) return cmd_rate(cfg, out_named, std::cout);
        if (mini->parsed()) return cmd_minimizer(cfg, std::cerr);
        if (ver->parsed()) return cmd_verify(cfg, VerifyRequest{suite, micro_runs, corrupt_ledger}, out_named, std::cout);
        return exit_config;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const ssep::InvalidArgument& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return exit_config;
    } catch (const ssep::GuardError& e) {
        std::cerr << "guard error: " << e.what() << '\n';
        return exit_guard;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_error;
    }
}
