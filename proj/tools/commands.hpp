#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "reports.hpp"
#include "run_config.hpp"
#include "ssep/exclusion.hpp"
#include "ssep/probe.hpp"
#include "ssep/rate.hpp"
#include "ssep/variational.hpp"
#include "ssep/verify.hpp"

namespace ssep::cli {

inline std::uint64_t require_seed(const RunConfig& c, const char* command) {
    if (!c.probe.master_seed)
        throw ConfigError(std::string(command) + " is randomized and needs an explicit seed (--seed or probe.master_seed)");
    return *c.probe.master_seed;
}

inline json report_header(const char* command, const RunConfig& c) {
    return {{"schema_version", schema_version}, {"command", command}, {"config", to_json(c)}};
}

// PathSample ensemble: one row per (replica, grid time), plus manifest.json.
// The data file depends only on the config and seed; the manifest also
// records the wall time of the run.
inline int cmd_simulate(const RunConfig& c, std::ostream& log) {
    const auto start = std::chrono::steady_clock::now();
    const std::uint64_t seed = require_seed(c, "simulate");
    ProbeConfig p = probe_config(c);
    p.master_seed = seed;
    p.validate();
    const auto times = p.lattice_times();
    check_guard(p.L, times.back(), 0, p.safety);
    const bool tagged = c.model.initial == "conditioned";

    std::vector<PathSample> paths(p.replicas);
    for_each_replica(p.replicas, p.threads, [&](std::size_t r) {
        paths[r] = sample_path(p.rho, p.L, times, derive_seed(seed, r), tagged, p.safety);
    });

    const OutputDir out(c.io.out_dir);
    const std::string data_name = "paths" + table_extension(c);
    {
        auto f = out.open(data_name);
        TableWriter w(f, {"replica", "seed", "t", "X", "J"}, c.io.format == "jsonl");
        for (std::size_t r = 0; r < paths.size(); ++r)
            for (std::size_t k = 0; k < times.size(); ++k)
                w.row({r, paths[r].seed, times[k], paths[r].X[k], paths[r].J[k]});
        if (!f) throw ConfigError("write failed for '" + out.path(data_name).string() + "'");
    }
    json manifest = report_header("simulate", c);
    manifest["master_seed"] = seed;
    manifest["seed_rule"] = "replica r uses derive_seed(master_seed, r)";
    manifest["replicas"] = p.replicas;
    manifest["rows"] = p.replicas * times.size();
    manifest["lattice_times"] = times;
    manifest["tagged"] = tagged;
    manifest["guard"] = {{"L", p.L},
                         {"t_max", times.back()},
                         {"safety", p.safety},
                         {"window", 0},
                         {"rule", "L/2 > 2*safety*sqrt(t_max) + window"}};
    manifest["files"] = {data_name};
    manifest["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.write_json("manifest.json", manifest);
    log << "simulate: wrote " << manifest["rows"].get<std::size_t>() << " rows to " << out.path(data_name).string()
        << '\n';
    return exit_ok;
}

// Fixed-time statistics of the current and/or tagged displacement, the
// covariance comparison with fractional Brownian motion and tail slopes.
inline int cmd_probe(const RunConfig& c, std::ostream& log) {
    const std::uint64_t seed = require_seed(c, "probe");
    ProbeConfig p = probe_config(c);
    p.master_seed = seed;
    p.validate();
    check_guard(p.L, p.lattice_times().back(), 0, p.safety);
    std::vector<Observable> observables;
    if (c.model.observable != "tagged") observables.push_back(Observable::current);
    if (c.model.observable != "current") observables.push_back(Observable::tagged);

    const OutputDir out(c.io.out_dir);
    json report = report_header("probe", c);
    report["master_seed"] = seed;
    const std::string tail_name = "tails" + table_extension(c);
    auto tf = out.open(tail_name);
    TableWriter tails(tf, {"observable", "t", "level", "count", "n", "p_hat", "p_gauss", "ratio", "ci_lo", "ci_hi", "bounded"},
                      c.io.format == "jsonl");
    for (Observable obs : observables) {
        const Eigen::MatrixXd y = simulate_observable(p, obs);
        StatsSummary s = summarize(y, p.grid, p.scale());
        if (auto w = a_n_advisory(p)) s.warnings.push_back(*w);
        const double sigma2 = observable_sigma2(obs, p.rho);
        json entry{{"summary", to_json(s)}, {"sigma2", sigma2}};
        if (p.grid.size() >= 2) entry["fbm_comparison"] = to_json(compare_fbm(s, sigma2));
        json slopes = json::array();
        for (Eigen::Index k = 0; k < y.cols(); ++k) {
            const Eigen::VectorXd col = y.col(k);
            const double t = p.grid[static_cast<std::size_t>(k)];
            const auto ts = tail_slope_from_samples(std::vector<double>(col.data(), col.data() + col.size()),
                                                    sigma2 * p.scale() * std::sqrt(t), c.probe.tail_levels);
            json per_time = json::array();
            for (const auto& sl : ts) {
                per_time.push_back(to_json(sl));
                tails.row({to_string(obs), t, sl.level, sl.count, sl.n, cell(sl.p_hat), cell(sl.p_gauss), cell(sl.ratio),
                           cell(sl.ci_lo), cell(sl.ci_hi), sl.bounded});
            }
            slopes.push_back({{"t", t}, {"levels", per_time}});
        }
        entry["tail_slopes"] = slopes;
        report["observables"][to_string(obs)] = entry;
        log << "probe: " << to_string(obs) << " variance at t=" << p.grid.back() << ": "
            << s.variance[s.variance.size() - 1] << " (predicted " << sigma2 * p.scale() * std::sqrt(p.grid.back())
            << ")\n";
    }
    if (!tf) throw ConfigError("write failed for '" + out.path(tail_name).string() + "'");
    out.write_json("summary.json", report);
    return exit_ok;
}

inline json rate_report(const RunConfig& c) {
    RateQuery q{c.query.times, c.query.alphas, c.model.rho};
    double value = 0.0;
    if (c.query.mode == "raw") value = finite_dim_rate(q);
    else if (c.query.mode == "current") value = rate_current(q);
    else value = rate_tagged(q);
    json j{{"schema_version", schema_version}, {"command", "rate"}, {"mode", c.query.mode},
           {"times", c.query.times}, {"alphas", c.query.alphas}, {"value", value}};
    if (c.query.mode != "raw") j["rho"] = c.model.rho;
    return j;
}

inline int cmd_rate(const RunConfig& c, bool write_file, std::ostream& out_stream) {
    const json j = rate_report(c);
    out_stream << j.dump(2) << '\n';
    if (write_file) OutputDir(c.io.out_dir).write_json("rate.json", j);
    return exit_ok;
}

struct MinimizerReport {
    json report;
    bool pass = true;
};

// Profiles of the optimal path and the rate computed three ways: Parseval
// quadrature in Fourier space, the real-space (mu0, K) form on graded grids
// and the closed form.
inline MinimizerReport minimizer_outputs(const RunConfig& c, const OutputDir& out) {
    check_density(c.model.rho);
    const double T = c.model.T, rho = c.model.rho;
    std::optional<Minimizer> mm;
    try {
        mm.emplace(c.query.times, c.query.alphas, T);
    } catch (const NumericalError& e) {
        throw ConfigError(std::string("minimizer: ") + e.what());
    }
    const Minimizer& m = *mm;
    XiGrid xi = XiGrid::for_min_time(m.times().front());
    if (c.numerics.xi_cutoff > 0.0) xi.cutoff = c.numerics.xi_cutoff;
    if (c.numerics.xi_step > 0.0) xi.steps = static_cast<std::size_t>(std::llround(xi.cutoff / c.numerics.xi_step));
    xi.validate();
    const bool jsonl = c.io.format == "jsonl";
    const std::string ext = table_extension(c);

    std::vector<double> s_values;
    for (int i = 1; i <= 64; ++i) s_values.push_back(T * i / 64.0);
    const MinimizerProfiles prof = make_profiles(m, s_values, xi);
    {
        auto f = out.open("k_origin" + ext);
        TableWriter w(f, {"s", "K_fourier", "K_closed"}, jsonl);
        for (const auto& pr : prof.profiles)
            w.row({pr.s, inverse_transform_at_origin(pr.xi, pr.K), m.current_at_origin(pr.s)});
    }
    {
        const double U = c.numerics.U > 0.0 ? c.numerics.U : 5.0 * std::sqrt(T);
        const auto nu = static_cast<long>(std::llround(U / c.numerics.du));
        const auto ns = static_cast<long>(std::llround(T / c.numerics.dt));
        const double chi_rho = chi(rho);
        auto f = out.open("profiles" + ext);
        TableWriter w(f, {"s", "u", "K", "mu", "H"}, jsonl);
        for (long i = 0; i <= ns; ++i) {
            const double s = i == ns ? T : static_cast<double>(i) * c.numerics.dt;
            for (long k = -nu; k <= nu; ++k) {
                const double u = static_cast<double>(k) * c.numerics.du;
                w.row({s, u, m.K(s, u), m.mu(s, u), m.control(s, u) / chi_rho});
            }
        }
    }

    const double q_parseval = parseval_Q(fourier_field(m), rho, xi);
    const double q_real = q_total_muK(minimizer_muk_field(m), rho);
    const double q_closed = m.closed_form_chi_q() / chi(rho);
    const double q_rate = sqrt_two_pi / (2.0 * chi(rho)) * finite_dim_rate(m.times(), c.query.alphas);
    const std::vector<double> routes{q_parseval, q_real, q_closed};
    double spread = 0.0;
    for (double a : routes)
        for (double b : routes) {
            const double scale = std::max(std::abs(a), std::abs(b));
            if (scale > 0.0) spread = std::max(spread, std::abs(a - b) / scale);
        }
    const double tolerance = 1e-3;
    MinimizerReport r;
    r.pass = spread <= tolerance;
    r.report = report_header("minimizer", c);
    r.report["routes"] = {{"parseval", q_parseval}, {"real_space", q_real}, {"closed_form", q_closed}};
    r.report["rate_route"] = q_rate;
    r.report["max_relative_spread"] = spread;
    r.report["tolerance"] = tolerance;
    r.report["pass"] = r.pass;
    r.report["xi_grid"] = {{"cutoff", xi.cutoff}, {"steps", xi.steps}};
    r.report["cutoff_monitor"] = {
        {"tail_mass", prof.tail_mass}, {"tail_residual", prof.tail_residual}, {"cutoff_ok", prof.cutoff_ok}};
    r.report["files"] = {"k_origin" + ext, "profiles" + ext};
    return r;
}

inline int cmd_minimizer(const RunConfig& c, std::ostream& log) {
    const OutputDir out(c.io.out_dir);
    const MinimizerReport r = minimizer_outputs(c, out);
    out.write_json("q_report.json", r.report);
    log << "minimizer: Q parseval " << r.report["routes"]["parseval"].get<double>() << ", real space "
        << r.report["routes"]["real_space"].get<double>() << ", closed form "
        << r.report["routes"]["closed_form"].get<double>() << " (spread " << r.report["max_relative_spread"].get<double>()
        << ")\n";
    return r.pass ? exit_ok : exit_verify;
}

struct VerifyRequest {
    std::string suite = "all";
    std::size_t micro_runs = 50;
    bool corrupt_ledger = false;
};

inline json verify_report(const RunConfig& c, const VerifyRequest& v, bool& pass) {
    VerifyOptions o;
    o.micro_runs = v.micro_runs;
    o.corrupt_ledger = v.corrupt_ledger;
    if (v.suite == "micro" || v.suite == "fbm" || v.suite == "all") o.seed = require_seed(c, "verify");
    const auto checks = run_verify_suite(v.suite, o);
    pass = all_passed(checks);
    json j{{"schema_version", schema_version}, {"command", "verify"}, {"suite", v.suite}, {"pass", pass}};
    if (v.suite == "micro" || v.suite == "fbm" || v.suite == "all") j["master_seed"] = o.seed;
    j["checks"] = json::array();
    json failed = json::array();
    for (const auto& ch : checks) {
        j["checks"].push_back(to_json(ch));
        if (!ch.pass) failed.push_back(ch.suite + "." + ch.name);
    }
    j["failed"] = failed;
    return j;
}

inline int cmd_verify(const RunConfig& c, const VerifyRequest& v, bool write_file, std::ostream& out_stream) {
    bool pass = false;
    const json j = verify_report(c, v, pass);
    out_stream << j.dump(2) << '\n';
    if (write_file) OutputDir(c.io.out_dir).write_json("verify_report.json", j);
    return pass ? exit_ok : exit_verify;
}

}  // namespace ssep::cli
