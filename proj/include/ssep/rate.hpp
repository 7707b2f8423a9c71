#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <mutex>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "ssep/errors.hpp"
#include "ssep/fbm.hpp"
#include "ssep/quadrature.hpp"

namespace ssep {

inline void check_density(double rho) {
    if (!(rho > 0.0 && rho < 1.0)) throw InvalidArgument("density must lie in (0,1)");
}

// Compressibility rho(1-rho).
inline double chi(double rho) {
    check_density(rho);
    return rho * (1.0 - rho);
}

// Diffusivity prefactors of the current and tagged-particle fluctuations.
inline double sigma2_current(double rho) { return std::sqrt(2.0 / std::numbers::pi) * chi(rho); }
inline double sigma2_tagged(double rho) {
    check_density(rho);
    return std::sqrt(2.0 / std::numbers::pi) * (1.0 - rho) / rho;
}

struct RateQuery {
    std::vector<double> times;
    std::vector<double> alphas;
    double rho = 0.5;
};

// 1/2 alpha^T A^{-1} alpha with A the covariance matrix at the query times.
inline double finite_dim_rate(const std::vector<double>& times, const std::vector<double>& alphas) {
    if (times.size() != alphas.size()) throw InvalidArgument("times and alphas differ in length");
    CovMatrix A(times);
    const Eigen::VectorXd a = Eigen::Map<const Eigen::VectorXd>(alphas.data(), static_cast<Eigen::Index>(alphas.size()));
    return 0.5 * A.inverse_quadratic_form(a);
}

inline double finite_dim_rate(const RateQuery& q) { return finite_dim_rate(q.times, q.alphas); }

inline double rate_current(const RateQuery& q) { return finite_dim_rate(q) / sigma2_current(q.rho); }
inline double rate_tagged(const RateQuery& q) { return finite_dim_rate(q) / sigma2_tagged(q.rho); }

// A function sampled on an increasing grid in [0, T].
struct PathFunction {
    std::vector<double> grid;
    std::vector<double> values;
    double T = 0.0;

    static PathFunction sample(const std::function<double(double)>& f, double T, std::size_t intervals) {
        PathFunction p;
        p.T = T;
        p.grid = uniform_grid(0.0, T, intervals);
        p.values.reserve(p.grid.size());
        for (double t : p.grid) p.values.push_back(f(t));
        return p;
    }

    void validate() const {
        if (grid.size() != values.size()) throw InvalidArgument("PathFunction: grid and values differ in length");
        if (grid.empty()) throw InvalidArgument("PathFunction: empty grid");
        if (grid.front() < 0.0 || grid.back() > T * (1.0 + 1e-14))
            throw InvalidArgument("PathFunction: grid must lie in [0, T]");
        for (std::size_t i = 1; i < grid.size(); ++i)
            if (!(grid[i] > grid[i - 1])) throw InvalidArgument("PathFunction: grid must be strictly increasing");
    }

    // Piecewise-linear interpolation of the samples.
    double operator()(double t) const {
        if (t <= grid.front()) return values.front();
        if (t >= grid.back()) return values.back();
        const auto it = std::upper_bound(grid.begin(), grid.end(), t);
        const auto k = static_cast<std::size_t>(it - grid.begin());
        const double w = (t - grid[k - 1]) / (grid[k] - grid[k - 1]);
        return (1.0 - w) * values[k - 1] + w * values[k];
    }
};

namespace detail {

// Unit-spacing collocation weights m(i,j) = int_{j-1}^{j} K(i, s) ds for
// 1 <= j <= i <= n. By the scaling K(c t, c s) = c^{-1/4} K(t, s) the
// weights on a uniform grid of spacing h are h^{3/4} m(i,j), so one table
// serves every horizon; it is built once and grown on demand.
class CollocationTable {
public:
    static CollocationTable& instance() {
        static CollocationTable t;
        return t;
    }

    // Returns a copy of the lower triangle for resolution n (row-major by i).
    Eigen::MatrixXd matrix(std::size_t n) {
        std::lock_guard<std::mutex> lock(mu_);
        grow(n);
        Eigen::MatrixXd M = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        for (std::size_t i = 1; i <= n; ++i)
            for (std::size_t j = 1; j <= i; ++j)
                M(static_cast<Eigen::Index>(i - 1), static_cast<Eigen::Index>(j - 1)) = rows_[i - 1][j - 1];
        return M;
    }

private:
    void grow(std::size_t n) {
        const auto& F = kernel_hyp();
        const double c = kernel_params().diagonal_constant();
        for (std::size_t i = rows_.size() + 1; i <= n; ++i) {
            std::vector<double> row(i);
            const double t = static_cast<double>(i);
            for (std::size_t j = 1; j <= i; ++j) {
                const double lo = static_cast<double>(j - 1);
                const double hi = static_cast<double>(j);
                if (i - j >= 8 && j > 4) {
                    // Both singularities are at least eight panels away.
                    auto g = [&](double s) { return c * F(-(t - s) / s) * std::pow(t - s, -0.25); };
                    row[j - 1] = gauss_legendre<4>(g, lo, hi);
                } else {
                    row[j - 1] = kernel_panel_integral(t, lo, hi);
                }
            }
            rows_.push_back(std::move(row));
        }
    }

    std::mutex mu_;
    std::vector<std::vector<double>> rows_;
};

// Piecewise-constant collocation solution h on a uniform grid with n panels of
// width dt: sum_j M(i,j) h_j = f(t_i) for i = 1..n.
inline Eigen::VectorXd volterra_solve(const std::vector<double>& f_nodes, double dt) {
    const std::size_t n = f_nodes.size() - 1;
    Eigen::MatrixXd M = CollocationTable::instance().matrix(n) * std::pow(dt, 0.75);
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(n));
    for (std::size_t i = 1; i <= n; ++i) rhs[static_cast<Eigen::Index>(i - 1)] = f_nodes[i];
    for (Eigen::Index i = 0; i < M.rows(); ++i)
        if (!(M(i, i) > 0.0)) throw NumericalError("volterra: singular collocation matrix");
    return M.triangularView<Eigen::Lower>().solve(rhs);
}

}  // namespace detail

struct VolterraResult {
    double rate = 0.0;
    double coarse_rate = 0.0;        // same solve at half the resolution
    double reconstruction_residual = 0.0;  // relative L2 misfit of int K h vs f at the nodes
    bool in_space = true;            // false when the +inf sentinel was returned
    Eigen::VectorXd h;
};

// Cameron-Martin energy 1/2 int h^2 of the density h solving
// f(t) = int_0^t K(t,s) h(s) ds, by product-integration collocation on the
// uniform grid with `resolution` panels (resolution must be even). f is read
// at the grid nodes, interpolating linearly if its own grid differs.
//
// Returns +inf when f(0) != 0, when the nodal reconstruction misses f by more
// than `residual_tol`, or when the energy grows by more than `growth_tol`
// (relative) from resolution/2 to resolution, the signature of a function
// outside the reproducing space.
inline VolterraResult path_rate_volterra_detailed(const PathFunction& f, std::size_t resolution,
                                                  double residual_tol = 1e-6, double growth_tol = 0.1) {
    f.validate();
    if (resolution < 2 || resolution % 2 != 0) throw InvalidArgument("volterra: resolution must be even and >= 2");
    if (!(f.T > 0.0)) throw InvalidArgument("volterra: horizon must be positive");
    VolterraResult out;
    const double inf = std::numeric_limits<double>::infinity();
    if (f.grid.front() > 0.0) throw InvalidArgument("volterra: f must be given at t = 0");
    const double scale = std::max(1.0, std::abs(f.values.front()));
    if (std::abs(f.values.front()) > 1e-14 * scale) {
        out.rate = inf;
        out.in_space = false;
        return out;
    }
    const auto grid = uniform_grid(0.0, f.T, resolution);
    std::vector<double> fn(grid.size());
    const bool same_grid = f.grid.size() == grid.size() &&
                           std::equal(grid.begin(), grid.end(), f.grid.begin(),
                                      [&](double a, double b) { return std::abs(a - b) <= 1e-12 * f.T; });
    for (std::size_t i = 0; i < grid.size(); ++i) fn[i] = same_grid ? f.values[i] : f(grid[i]);
    const double dt = f.T / static_cast<double>(resolution);
    out.h = detail::volterra_solve(fn, dt);
    out.rate = 0.5 * out.h.squaredNorm() * dt;

    // Reconstruction at the nodes.
    const Eigen::MatrixXd M = detail::CollocationTable::instance().matrix(resolution) * std::pow(dt, 0.75);
    const Eigen::VectorXd rec = M.triangularView<Eigen::Lower>() * out.h;
    double num = 0.0, den = 0.0;
    for (std::size_t i = 1; i <= resolution; ++i) {
        const double d = rec[static_cast<Eigen::Index>(i - 1)] - fn[i];
        num += d * d;
        den += fn[i] * fn[i];
    }
    out.reconstruction_residual = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);

    std::vector<double> coarse(resolution / 2 + 1);
    for (std::size_t i = 0; i < coarse.size(); ++i) coarse[i] = fn[2 * i];
    const Eigen::VectorXd hc = detail::volterra_solve(coarse, 2.0 * dt);
    out.coarse_rate = 0.5 * hc.squaredNorm() * 2.0 * dt;

    const double floor = 1e-300;
    if (out.reconstruction_residual > residual_tol ||
        out.rate > (1.0 + growth_tol) * out.coarse_rate + floor) {
        out.rate = inf;
        out.in_space = false;
    }
    return out;
}

inline double path_rate_volterra(const PathFunction& f, std::size_t resolution = 2048) {
    return path_rate_volterra_detailed(f, resolution).rate;
}

struct SupResult {
    double rate = 0.0;
    std::vector<double> times;     // selected times, in selection order
    std::vector<double> history;   // rate after each selection
};

// Greedy lower bound on the path rate: repeatedly add the grid time whose
// inclusion raises the finite-dimensional rate most (ties to the smaller
// time), up to max_n times. Increments come from the Schur complement of the
// covariance matrix, updated incrementally.
inline SupResult path_rate_sup_detailed(const PathFunction& f, std::size_t max_n) {
    f.validate();
    std::vector<double> cand_t;
    std::vector<double> cand_v;
    for (std::size_t i = 0; i < f.grid.size(); ++i) {
        if (f.grid[i] > 0.0) {
            cand_t.push_back(f.grid[i]);
            cand_v.push_back(f.values[i]);
        }
    }
    const std::size_t m = cand_t.size();
    SupResult out;
    if (m == 0 || max_n == 0) return out;
    // Column k of V holds L^{-1} a(S, t_c) for candidate c; w = L^{-1} alpha_S.
    Eigen::MatrixXd V = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(max_n), static_cast<Eigen::Index>(m));
    Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(max_n));
    std::vector<char> used(m, 0);
    double rate = 0.0;
    for (std::size_t k = 0; k < max_n; ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        std::size_t best = m;
        double best_inc = -1.0;
        for (std::size_t c = 0; c < m; ++c) {
            if (used[c]) continue;
            const auto cc = static_cast<Eigen::Index>(c);
            const double diag = std::sqrt(cand_t[c]);
            const double schur = diag - V.col(cc).head(kk).squaredNorm();
            if (!(schur > 1e-12 * diag)) continue;
            const double r = cand_v[c] - V.col(cc).head(kk).dot(w.head(kk));
            const double inc = 0.5 * r * r / schur;
            if (inc > best_inc) {
                best_inc = inc;
                best = c;
            }
        }
        if (best == m) break;
        const auto bb = static_cast<Eigen::Index>(best);
        const double lkk = std::sqrt(std::sqrt(cand_t[best]) - V.col(bb).head(kk).squaredNorm());
        w[kk] = (cand_v[best] - V.col(bb).head(kk).dot(w.head(kk))) / lkk;
        for (std::size_t c = 0; c < m; ++c) {
            if (used[c] || c == best) continue;
            const auto cc = static_cast<Eigen::Index>(c);
            V(kk, cc) = (cov_a(cand_t[best], cand_t[c]) - V.col(bb).head(kk).dot(V.col(cc).head(kk))) / lkk;
        }
        used[best] = 1;
        rate += best_inc;
        out.times.push_back(cand_t[best]);
        out.history.push_back(rate);
    }
    out.rate = rate;
    return out;
}

inline double path_rate_sup(const PathFunction& f, std::size_t max_n) {
    return path_rate_sup_detailed(f, max_n).rate;
}

}  // namespace ssep
