#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "ssep/errors.hpp"
#include "ssep/exclusion.hpp"
#include "ssep/fbm.hpp"
#include "ssep/hydro.hpp"
#include "ssep/probe.hpp"
#include "ssep/rate.hpp"
#include "ssep/rng.hpp"
#include "ssep/variational.hpp"

namespace ssep {

// Outcome of one named invariant. `value` is the measured quantity (a worst
// residual, an error or a failure count) and passes when value <= tolerance.
struct VerifyCheck {
    std::string suite;
    std::string name;
    bool pass = false;
    double value = 0.0;
    double tolerance = 0.0;
    std::string detail;
};

struct VerifyOptions {
    std::uint64_t seed = 1;
    std::size_t micro_runs = 50;
    std::int64_t micro_L = 2048;
    double micro_t_max = 400.0;
    // Negative control: bump one bond of the current ledger in the first run.
    bool corrupt_ledger = false;
};

inline const std::vector<std::string>& verify_suites() {
    static const std::vector<std::string> names{"micro", "fourier", "field", "fbm"};
    return names;
}

namespace detail {

inline VerifyCheck make_check(const std::string& suite, const std::string& name, double value, double tolerance,
                              std::string detail = {}) {
    VerifyCheck c{suite, name, false, value, tolerance, std::move(detail)};
    c.pass = std::isfinite(value) && value <= tolerance;
    return c;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

// Randomized microscopic runs: density in [0.1, 0.9], time in (0, t_max],
// tent parameters n in [1, 10], N in [1, 50], a_N in [1, N].
inline std::vector<VerifyCheck> micro_suite(const VerifyOptions& o) {
    const std::string suite = "micro";
    if (o.micro_runs == 0) throw InvalidArgument("verify: micro suite needs at least one run");
    std::size_t conservation_fail = 0, tagged_fail = 0, stirring_fail = 0;
    double gn_worst = 0.0;
    std::size_t first_bad = o.micro_runs;
    for (std::size_t r = 0; r < o.micro_runs; ++r) {
        Xoshiro256 rng(derive_seed(o.seed, r));
        const double rho = 0.1 + 0.8 * rng.uniform();
        const double t = o.micro_t_max * (1.0 - rng.uniform());
        const int n = 1 + static_cast<int>(rng.bounded(10));
        const int N = 1 + static_cast<int>(rng.bounded(50));
        const double a_N = 1.0 + (N - 1) * rng.uniform();
        check_guard(o.micro_L, t, 0, 10.0);
        SimOptions opts;
        opts.track_stirring = true;
        SimState s = init_conditioned(rho, o.micro_L, derive_seed(o.seed ^ 0x6d6963726fULL, r), opts);
        s.advance_to(t);
        if (o.corrupt_ledger && r == 0) s.set_current(3, s.current(3) + 1);
        const auto& w = s.window();
        bool ok = true;
        if (!check_conservation(s, w.x_min() + 1, w.x_max() - 1)) ++conservation_fail, ok = false;
        if (!check_current_tagged_identity(s)) ++tagged_fail, ok = false;
        if (!check_stirring_pushforward(s)) ++stirring_fail, ok = false;
        const double gn = std::abs(check_Gn_decomposition(s, n, N, a_N));
        gn_worst = std::max(gn_worst, gn);
        if (gn >= 1e-10) ok = false;
        if (!ok && first_bad == o.micro_runs) first_bad = r;
    }
    const std::string where = first_bad < o.micro_runs ? "first failing run " + std::to_string(first_bad) : "";
    const std::string runs = std::to_string(o.micro_runs) + " runs";
    std::vector<VerifyCheck> out;
    out.push_back(make_check(suite, "conservation", static_cast<double>(conservation_fail), 0.0,
                             runs + (conservation_fail ? ", " + where : "")));
    out.push_back(make_check(suite, "current_tagged_identity", static_cast<double>(tagged_fail), 0.0, runs));
    out.push_back(make_check(suite, "gn_decomposition", gn_worst, 1e-10, runs + ", worst residual"));
    out.push_back(make_check(suite, "stirring_pushforward", static_cast<double>(stirring_fail), 0.0, runs));
    out.push_back(make_check(suite, "guard_rejects_small_ring",
                             guard_ok(256, o.micro_t_max, 0, 10.0) ? 1.0 : 0.0, 0.0,
                             "L=256 must be refused for t_max=" + std::to_string(o.micro_t_max)));
    return out;
}

inline std::vector<VerifyCheck> fourier_suite() {
    const std::string suite = "fourier";
    std::vector<VerifyCheck> out;

    const auto qjk = q_jk_quadrature(1.0, 4.0, 5.0);
    out.push_back(make_check(suite, "q_jk_closed_form", rel_err(qjk.value, qjk.closed_form), 1e-5,
                             "t_j=1, t_k=4, T=5, relative error"));

    double worst = 0.0;
    for (double a : {0.1, 0.5, 1.0, 2.0}) {
        const auto c = integral_formula_check(a);
        worst = std::max(worst, rel_err(c.numeric, c.closed_form));
    }
    out.push_back(make_check(suite, "integral_formula", worst, 1e-8, "a in {0.1, 0.5, 1, 2}, relative error"));

    const double rho = 0.5, t = 1.0, alpha = 1.0;
    std::vector<double> s_values;
    for (int i = 1; i <= 16; ++i) s_values.push_back(t * i / 16.0);
    const auto prof = single_time_minimizer(t, alpha, t, s_values);
    const double q = parseval_Q(prof, rho);
    const double q_closed = sqrt_two_pi * alpha * alpha / (4.0 * chi(rho) * std::sqrt(t));
    out.push_back(make_check(suite, "parseval_single_time", rel_err(q, q_closed), 1e-4, "t=T=1, alpha=1, rho=0.5"));

    double k_worst = 0.0;
    for (const auto& p : prof.profiles)
        k_worst = std::max(k_worst, std::abs(inverse_transform_at_origin(p.xi, p.K) - alpha * cov_a(t, p.s) / std::sqrt(t)));
    out.push_back(make_check(suite, "current_at_origin_curve", k_worst, 1e-5, "16 values of s, absolute error"));

    const Minimizer m({1.0, 4.0}, {1.0, 1.0}, 4.0);
    const double q2 = parseval_Q(fourier_field(m), rho, XiGrid::for_min_time(1.0));
    const double q2_closed = m.closed_form_chi_q() / chi(rho);
    out.push_back(make_check(suite, "parseval_two_times", rel_err(q2, q2_closed), 1e-3, "times (1,4), alphas (1,1)"));
    out.push_back(make_check(suite, "closed_form_vs_rate",
                             rel_err(q2_closed, sqrt_two_pi / (2.0 * chi(rho)) * finite_dim_rate({1.0, 4.0}, {1.0, 1.0})),
                             1e-12, "sqrt(2 pi)/(4 chi) alpha^T A^-1 alpha against the finite-dimensional rate"));
    return out;
}

inline std::vector<VerifyCheck> field_suite() {
    const std::string suite = "field";
    std::vector<VerifyCheck> out;

    const auto g = FieldGrid::defaults(1.0);
    const auto heat = make_grid_field(g, 0.5, [](double u) { return heat_kernel(1.0, u); }, [](double, double) { return 0.0; });
    double worst = 0.0;
    for (std::size_t n = 0; n <= g.nt; n += 100)
        for (std::size_t k = 0; k < g.nu; ++k)
            worst = std::max(worst, std::abs(heat.mu(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k)) -
                                             heat_kernel(1.0 + g.t(n), g.u(k))));
    out.push_back(make_check(suite, "heat_semigroup", worst, 1e-4, "p_1 evolved to p_{1+t}, max error"));

    const auto odd = make_grid_field(FieldGrid::with_steps(1.0, 5e-4, 10.0, 0.01), 0.5,
                                     [](double v) { return v * std::exp(-v * v); }, [](double, double) { return 0.0; });
    const auto cur = field_current(odd).back();
    out.push_back(make_check(suite, "field_current_identity", std::abs(cur.residual), 1e-4, "psi(v) = v exp(-v^2), t=1"));

    const auto gq = FieldGrid::with_steps(1.0, 1e-3, 14.0, 0.02);
    const double rho = 0.3;
    const auto f = make_grid_field(
        gq, rho, [](double u) { return 0.4 * std::exp(-u * u) - 0.2 * u * std::exp(-0.5 * u * u); },
        [](double t, double u) { return t * (1.0 - t) * std::exp(-(u - 0.3) * (u - 0.3)); });
    const double direct = q_zero(f) + q_dyn(f);
    const double via_current = q_total_muK(to_muk(f), rho);
    out.push_back(make_check(suite, "two_routes_to_q", rel_err(via_current, direct), 1e-2,
                             "q_zero + q_dyn against the (mu0, K) form"));

    const auto pb = check_pprime_bound(1.0, {0.1, 1.0, 3.0, 10.0, -2.0});
    out.push_back(make_check(suite, "pprime_integral_bound", pb.constant, 1.2, "sup |u| |int_0^t p'_s(u) ds|"));
    return out;
}

inline std::vector<VerifyCheck> fbm_suite(const VerifyOptions& o) {
    const std::string suite = "fbm";
    std::vector<VerifyCheck> out;
    double worst = 0.0;
    for (int i = 1; i <= 4; ++i)
        for (int j = 1; j <= 4; ++j) {
            const double t = i, s = j * 0.75;
            worst = std::max(worst, std::abs(kernel_covariance(t, s) - cov_a(t, s)));
        }
    out.push_back(make_check(suite, "kernel_identity", worst, 1e-5, "4 x 4 grid, max |int K K - a|"));

    const std::vector<double> grid{0.5, 1.0, 2.0, 4.0};
    const auto paths = sample_fbm(grid, 4000, derive_seed(o.seed, 0xfb), FbmMethod::cholesky);
    const auto cmp = compare_fbm(summarize(paths.values, grid), 1.0);
    out.push_back(make_check(suite, "sampler_covariance", cmp.max_abs_z, cmp.threshold,
                             "4000 Cholesky paths, max |z| in Monte Carlo standard errors"));
    return out;
}

}  // namespace detail

// Runs one suite ("micro", "fourier", "field", "fbm") or "all".
inline std::vector<VerifyCheck> run_verify_suite(const std::string& suite, const VerifyOptions& o = {}) {
    if (suite == "all") {
        std::vector<VerifyCheck> all;
        for (const auto& name : verify_suites()) {
            auto part = run_verify_suite(name, o);
            all.insert(all.end(), part.begin(), part.end());
        }
        return all;
    }
    if (suite == "micro") return detail::micro_suite(o);
    if (suite == "fourier") return detail::fourier_suite();
    if (suite == "field") return detail::field_suite();
    if (suite == "fbm") return detail::fbm_suite(o);
    throw InvalidArgument("verify: unknown suite '" + suite + "'");
}

inline bool all_passed(const std::vector<VerifyCheck>& checks) {
    return std::all_of(checks.begin(), checks.end(), [](const VerifyCheck& c) { return c.pass; });
}

}  // namespace ssep
