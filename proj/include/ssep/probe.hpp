#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include "ssep/errors.hpp"
#include "ssep/exclusion.hpp"
#include "ssep/fbm.hpp"
#include "ssep/rate.hpp"
#include "ssep/rng.hpp"

namespace ssep {

enum class Observable { current, tagged };

// Initial law of the simulation: product Bernoulli, or the same draw with the
// origin occupied and tagged. The tagged observable always uses the latter.
enum class InitialLaw { automatic, bernoulli, conditioned };

inline const char* to_string(Observable o) { return o == Observable::current ? "current" : "tagged"; }

struct ProbeConfig {
    double rho = 0.5;
    std::int64_t N = 1;
    double a_N = 1.0;
    std::vector<double> grid{400.0};  // macroscopic times; lattice times are grid * N^2
    std::size_t replicas = 1000;
    std::uint64_t master_seed = 0;
    std::int64_t L = 2048;
    double safety = 10.0;
    unsigned threads = 0;  // 0: hardware concurrency
    InitialLaw initial = InitialLaw::automatic;

    double scale() const { return static_cast<double>(N) / (a_N * a_N); }

    std::vector<double> lattice_times() const {
        std::vector<double> t(grid);
        const double n2 = static_cast<double>(N) * static_cast<double>(N);
        for (auto& v : t) v *= n2;
        return t;
    }

    void validate() const {
        check_density(rho);
        if (N < 1) throw InvalidArgument("probe: N must be at least 1");
        if (!(a_N > 0.0)) throw InvalidArgument("probe: a_N must be positive");
        if (replicas < 2) throw InvalidArgument("probe: need at least two replicas");
        if (!(safety > 0.0)) throw InvalidArgument("probe: safety must be positive");
        check_grid(grid);
        if (!(grid.front() > 0.0)) throw InvalidArgument("probe: grid times must be positive");
    }
};

// Advisory only: the moderate-deviation window sqrt(N log N) < a_N < N.
inline std::optional<std::string> a_n_advisory(const ProbeConfig& cfg) {
    const double n = static_cast<double>(cfg.N);
    const double lo = std::sqrt(n * std::log(n));
    if (cfg.a_N > lo && cfg.a_N < n) return std::nullopt;
    return "a_N = " + std::to_string(cfg.a_N) + " lies outside the moderate-deviation window (" + std::to_string(lo) +
           ", " + std::to_string(n) + ")";
}

inline const std::vector<double>& default_tail_levels() {
    static const std::vector<double> levels{1.5, 2.0, 2.5, 3.0};
    return levels;
}

struct TailFrequency {
    double level = 0.0;      // in units of the empirical standard deviation
    std::size_t count = 0;   // samples with y - mean >= level * std
    double log_frequency = 0.0;  // -inf when count = 0
    double se = 0.0;         // delta-method error of log_frequency
};

struct StatsSummary {
    std::vector<double> times;
    std::size_t n = 0;
    double scale = 1.0;  // predicted covariance is sigma2 * scale * a(t_i, t_j)
    Eigen::VectorXd mean, mean_se;
    Eigen::VectorXd variance, variance_se;
    Eigen::VectorXd skewness, skewness_se;
    Eigen::VectorXd excess_kurtosis, kurtosis_se;
    Eigen::MatrixXd covariance, covariance_se;
    std::vector<std::vector<TailFrequency>> tails;  // per time, per level
    std::vector<std::string> warnings;
};

namespace detail {

// Pairwise summation of f(0..n-1) in a fixed tree, so the result does not
// depend on how the samples were produced.
template <class F>
double pairwise_sum(std::size_t lo, std::size_t hi, const F& f) {
    if (hi - lo <= 8) {
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) s += f(i);
        return s;
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    return pairwise_sum(lo, mid, f) + pairwise_sum(mid, hi, f);
}

}  // namespace detail

// Rows are replicas, columns are grid times.
inline StatsSummary summarize(const Eigen::MatrixXd& samples, const std::vector<double>& times, double scale = 1.0,
                              const std::vector<double>& levels = default_tail_levels()) {
    const auto n = static_cast<std::size_t>(samples.rows());
    const auto m = samples.cols();
    if (n < 2) throw InvalidArgument("summarize: need at least two samples");
    if (static_cast<std::size_t>(m) != times.size()) throw InvalidArgument("summarize: times do not match columns");
    StatsSummary s;
    s.times = times;
    s.n = n;
    s.scale = scale;
    const double dn = static_cast<double>(n);
    s.mean.resize(m);
    for (Eigen::Index j = 0; j < m; ++j)
        s.mean[j] = detail::pairwise_sum(0, n, [&](std::size_t i) { return samples(static_cast<Eigen::Index>(i), j); }) / dn;

    auto central = [&](Eigen::Index j, std::size_t i) { return samples(static_cast<Eigen::Index>(i), j) - s.mean[j]; };
    s.covariance.resize(m, m);
    s.covariance_se.resize(m, m);
    for (Eigen::Index a = 0; a < m; ++a)
        for (Eigen::Index b = a; b < m; ++b) {
            const double c = detail::pairwise_sum(0, n, [&](std::size_t i) { return central(a, i) * central(b, i); }) / (dn - 1.0);
            const double c4 = detail::pairwise_sum(0, n, [&](std::size_t i) {
                                  const double v = central(a, i) * central(b, i);
                                  return v * v;
                              }) / dn;
            const double se = std::sqrt(std::max(c4 - c * c, 0.0) / dn);
            s.covariance(a, b) = s.covariance(b, a) = c;
            s.covariance_se(a, b) = s.covariance_se(b, a) = se;
        }

    s.variance = s.covariance.diagonal();
    s.variance_se = s.covariance_se.diagonal();
    s.mean_se = (s.variance / dn).cwiseSqrt();
    s.skewness.resize(m);
    s.excess_kurtosis.resize(m);
    // Normal-theory standard errors of the shape statistics.
    s.skewness_se = Eigen::VectorXd::Constant(m, std::sqrt(6.0 * dn * (dn - 1.0) / ((dn - 2.0) * (dn + 1.0) * (dn + 3.0))));
    s.kurtosis_se = Eigen::VectorXd::Constant(m, std::sqrt(24.0 / dn));
    s.tails.resize(static_cast<std::size_t>(m));
    for (Eigen::Index j = 0; j < m; ++j) {
        const double m2 = detail::pairwise_sum(0, n, [&](std::size_t i) { return std::pow(central(j, i), 2); }) / dn;
        const double m3 = detail::pairwise_sum(0, n, [&](std::size_t i) { return std::pow(central(j, i), 3); }) / dn;
        const double m4 = detail::pairwise_sum(0, n, [&](std::size_t i) { return std::pow(central(j, i), 4); }) / dn;
        s.skewness[j] = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
        s.excess_kurtosis[j] = m2 > 0.0 ? m4 / (m2 * m2) - 3.0 : 0.0;
        const double sd = std::sqrt(s.variance[j]);
        for (double level : levels) {
            TailFrequency tf;
            tf.level = level;
            for (std::size_t i = 0; i < n; ++i)
                if (sd > 0.0 && central(j, i) >= level * sd) ++tf.count;
            const double p = static_cast<double>(tf.count) / dn;
            tf.log_frequency = tf.count > 0 ? std::log(p) : -std::numeric_limits<double>::infinity();
            tf.se = tf.count > 0 ? std::sqrt((1.0 - p) / (dn * p)) : std::numeric_limits<double>::infinity();
            s.tails[static_cast<std::size_t>(j)].push_back(tf);
        }
    }
    return s;
}

// Calls job(r) for r = 0..count-1 on `threads` workers (0: hardware
// concurrency). Replicas are claimed from a shared counter; the first
// exception stops the pool and is rethrown.
template <class Job>
void for_each_replica(std::size_t count, unsigned threads, const Job& job) {
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    auto worker = [&] {
        try {
            for (std::size_t r = next++; r < count; r = next++) job(r);
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mu);
            if (!error) error = std::current_exception();
            next = count;
        }
    };
    unsigned n = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
    n = static_cast<unsigned>(std::min<std::size_t>(n, count));
    if (n <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned i = 0; i < n; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (error) std::rethrow_exception(error);
}

// Observable sample matrix (replicas x grid) for cfg; replica r uses seed derive_seed(master_seed, r)
// and writes its own row, so the matrix does not depend on the thread count.
inline Eigen::MatrixXd simulate_observable(const ProbeConfig& cfg, Observable obs) {
    cfg.validate();
    const auto times = cfg.lattice_times();
    check_guard(cfg.L, times.back(), 0, cfg.safety);
    const bool conditioned = obs == Observable::tagged || cfg.initial == InitialLaw::conditioned;
    if (obs == Observable::tagged && cfg.initial == InitialLaw::bernoulli)
        throw InvalidArgument("probe: the tagged observable needs the conditioned initial law");
    Eigen::MatrixXd out(static_cast<Eigen::Index>(cfg.replicas), static_cast<Eigen::Index>(times.size()));
    for_each_replica(cfg.replicas, cfg.threads, [&](std::size_t r) {
        const PathSample p = sample_path(cfg.rho, cfg.L, times, derive_seed(cfg.master_seed, r), conditioned, cfg.safety);
        for (std::size_t k = 0; k < times.size(); ++k)
            out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) =
                static_cast<double>(obs == Observable::tagged ? p.X[k] : p.J[k]) / cfg.a_N;
    });
    return out;
}

inline StatsSummary run_probe(const ProbeConfig& cfg, Observable obs) {
    StatsSummary s = summarize(simulate_observable(cfg, obs), cfg.grid, cfg.scale());
    if (auto w = a_n_advisory(cfg)) s.warnings.push_back(*w);
    return s;
}

inline double observable_sigma2(Observable obs, double rho) {
    return obs == Observable::current ? sigma2_current(rho) : sigma2_tagged(rho);
}

struct FbmComparisonEntry {
    std::size_t i = 0, j = 0;
    double empirical = 0.0, predicted = 0.0, se = 0.0, z = 0.0;
};

struct FbmComparison {
    std::vector<FbmComparisonEntry> entries;
    double max_abs_z = 0.0;
    double threshold = 4.0;
    bool pass = true;
};

// Empirical covariance against sigma2 * scale * a(t_i, t_j), z-scores in Monte Carlo standard errors.
inline FbmComparison compare_fbm(const StatsSummary& s, double sigma2, double threshold = 4.0) {
    if (s.times.size() < 2) throw InvalidArgument("compare_fbm: need at least two grid times");
    FbmComparison c;
    c.threshold = threshold;
    for (std::size_t i = 0; i < s.times.size(); ++i)
        for (std::size_t j = i; j < s.times.size(); ++j) {
            FbmComparisonEntry e;
            e.i = i;
            e.j = j;
            const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
            e.empirical = s.covariance(ii, jj);
            e.predicted = sigma2 * s.scale * cov_a(s.times[i], s.times[j]);
            e.se = s.covariance_se(ii, jj);
            e.z = e.se > 0.0 ? (e.empirical - e.predicted) / e.se : (e.empirical == e.predicted ? 0.0 : std::numeric_limits<double>::infinity());
            c.max_abs_z = std::max(c.max_abs_z, std::abs(e.z));
            c.entries.push_back(e);
        }
    c.pass = c.max_abs_z < threshold;
    return c;
}

struct TailSlope {
    double level = 0.0;  // in units of the predicted standard deviation
    std::size_t count = 0;
    std::size_t n = 0;
    double p_hat = 0.0;
    double p_gauss = 0.0;  // Gaussian upper-tail probability at the same level
    double ratio = 0.0;    // log p_hat / log p_gauss
    double ci_lo = 0.0, ci_hi = 0.0;
    bool bounded = true;
};

inline constexpr std::size_t tail_min_count = 30;

// Upper-tail frequencies of the samples at level * sqrt(predicted_variance)
// compared with the Gaussian tail at the same level, i.e. the ratio of the
// empirical decay rate to the quadratic rate level^2 / 2 (with its exact
// finite-level prefactor). Intervals are Wilson 95% intervals mapped through the
// logarithm; fewer than tail_min_count exceedances marks the interval unbounded.
inline std::vector<TailSlope> tail_slope_from_samples(const std::vector<double>& y, double predicted_variance,
                                                      const std::vector<double>& levels) {
    if (y.size() < 2) throw InvalidArgument("tail_slope: need samples");
    if (!(predicted_variance > 0.0)) throw InvalidArgument("tail_slope: predicted variance must be positive");
    const double sd = std::sqrt(predicted_variance);
    const double n = static_cast<double>(y.size());
    const double z = 1.959963984540054;
    const boost::math::normal_distribution<double> gauss;
    std::vector<TailSlope> out;
    for (double level : levels) {
        TailSlope t;
        t.level = level;
        t.n = y.size();
        t.count = static_cast<std::size_t>(std::count_if(y.begin(), y.end(), [&](double v) { return v >= level * sd; }));
        t.p_hat = static_cast<double>(t.count) / n;
        t.p_gauss = boost::math::cdf(boost::math::complement(gauss, level));
        const double lg = std::log(t.p_gauss);
        const double centre = (t.p_hat + z * z / (2 * n)) / (1 + z * z / n);
        const double half = z / (1 + z * z / n) * std::sqrt(t.p_hat * (1 - t.p_hat) / n + z * z / (4 * n * n));
        const double p_lo = std::max(centre - half, 0.0), p_hi = std::min(centre + half, 1.0);
        t.bounded = t.count >= tail_min_count;
        t.ratio = t.count > 0 ? std::log(t.p_hat) / lg : std::numeric_limits<double>::infinity();
        t.ci_lo = p_hi > 0.0 ? std::log(p_hi) / lg : 0.0;
        t.ci_hi = (t.bounded && p_lo > 0.0) ? std::log(p_lo) / lg : std::numeric_limits<double>::infinity();
        out.push_back(t);
    }
    return out;
}

// Tail slopes of the observable at the last grid time, predicted variance sigma2 * scale * sqrt(t).
inline std::vector<TailSlope> tail_slope(const ProbeConfig& cfg, Observable obs, const std::vector<double>& levels) {
    const Eigen::MatrixXd y = simulate_observable(cfg, obs);
    const Eigen::VectorXd last = y.col(y.cols() - 1);
    const double t = cfg.grid.back();
    return tail_slope_from_samples(std::vector<double>(last.data(), last.data() + last.size()),
                                   observable_sigma2(obs, cfg.rho) * cfg.scale() * std::sqrt(t), levels);
}

}  // namespace ssep
