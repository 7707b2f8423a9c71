#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "ssep/errors.hpp"
#include "ssep/hyp2f1.hpp"
#include "ssep/quadrature.hpp"
#include "ssep/rng.hpp"

namespace ssep {

// Normalisation of the Hurst-1/4 kernel.
struct KernelParams {
    double V = 8.0 * std::tgamma(1.5) * std::cos(std::numbers::pi / 4.0) / std::numbers::pi;
    double gamma_three_quarters = std::tgamma(0.75);

    // Limit of K(t,s)*(t-s)^{1/4} as s -> t.
    double diagonal_constant() const { return 1.0 / (std::sqrt(V) * gamma_three_quarters); }
};

inline const KernelParams& kernel_params() {
    static const KernelParams p;
    return p;
}

// Covariance of fractional Brownian motion with Hurst index 1/4.
inline double cov_a(double t, double s) {
    if (t < 0.0 || s < 0.0) throw InvalidArgument("cov_a: times must be nonnegative");
    return 0.5 * (std::sqrt(t) + std::sqrt(s) - std::sqrt(std::abs(t - s)));
}

namespace detail {

inline const Hyp2F1& kernel_hyp() {
    static const Hyp2F1 f(0.25, -0.25, 0.75);
    return f;
}

}  // namespace detail

// Kernel with the diagonal singularity removed: K(t,s)*(t-s)^{1/4}, written in
// terms of s and the gap t-s so that tiny gaps keep full relative precision.
inline double kernel_regular_part(double s, double gap) {
    return kernel_params().diagonal_constant() * detail::kernel_hyp()(-gap / s);
}

inline double kernel_K_gap(double s, double gap) {
    return kernel_regular_part(s, gap) * std::pow(gap, -0.25);
}

// Volterra kernel of the Hurst-1/4 representation B_t = int_0^t K(t,s) dW_s.
inline double kernel_K(double t, double s) {
    if (!(s > 0.0) || !(s < t)) throw InvalidArgument("kernel_K: requires 0 < s < t");
    return kernel_K_gap(s, t - s);
}

// int_lo^hi K(t,s) ds for 0 <= lo < hi <= t. Near the origin the kernel is
// s^{-1/4} and s^{1/4} times analytic functions, near the diagonal it is
// (t-s)^{-1/4} times an analytic function; the quartic substitutions
// s = v^4 and t-s = u^4 turn both into smooth integrands for Gauss-Legendre.
inline double kernel_panel_integral(double t, double lo, double hi) {
    if (!(lo >= 0.0) || !(hi > lo) || hi > t) throw InvalidArgument("kernel_panel_integral: bad panel");
    const double c = kernel_params().diagonal_constant();
    const auto& F = detail::kernel_hyp();
    const double mid = 0.5 * t;
    if (lo < mid && hi > mid) return kernel_panel_integral(t, lo, mid) + kernel_panel_integral(t, mid, hi);
    if (hi <= mid) {
        auto g = [&](double v) {
            const double v2 = v * v;
            const double s = v2 * v2;
            return 4.0 * v2 * v * kernel_K_gap(s, t - s);
        };
        return gauss_legendre<10>(g, std::pow(lo, 0.25), std::pow(hi, 0.25));
    }
    auto g = [&](double u) {
        const double u2 = u * u;
        const double gap = u2 * u2;
        return 4.0 * c * u2 * F(-gap / (t - gap));
    };
    return gauss_legendre<10>(g, std::pow(t - hi, 0.25), std::pow(t - lo, 0.25));
}

// int_0^{min(t,s)} K(t,r) K(s,r) dr by tanh-sinh quadrature; the endpoint
// complement is used to evaluate the diagonal gap without cancellation.
inline double kernel_covariance(double t, double s, double tol = 1e-12) {
    if (!(t > 0.0) || !(s > 0.0)) throw InvalidArgument("kernel_covariance: times must be positive");
    const double m = std::min(t, s);
    const double other = std::max(t, s);
    boost::math::quadrature::tanh_sinh<double> integrator;
    auto f = [&](double r, double rc) {
        if (r <= 0.0) return 0.0;
        const double gap_m = rc > 0.0 ? rc : m - r;
        if (gap_m <= 0.0) return 0.0;
        const double km = kernel_K_gap(r, gap_m);
        const double ko = (other == m) ? km : kernel_K_gap(r, other - r);
        return km * ko;
    };
    return integrator.integrate(f, 0.0, m, tol);
}

// Covariance matrix of the process at strictly increasing positive times,
// with a lazily computed Cholesky factor.
class CovMatrix {
public:
    explicit CovMatrix(std::vector<double> times) : times_(std::move(times)) {
        if (times_.empty()) throw InvalidArgument("CovMatrix: no times");
        for (std::size_t i = 0; i < times_.size(); ++i) {
            if (!(times_[i] > 0.0)) throw InvalidArgument("CovMatrix: times must be positive");
            if (i > 0 && !(times_[i] > times_[i - 1]))
                throw InvalidArgument("CovMatrix: times must be strictly increasing");
        }
        const auto n = static_cast<Eigen::Index>(times_.size());
        A_.resize(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j) A_(i, j) = cov_a(times_[i], times_[j]);
    }

    const std::vector<double>& times() const { return times_; }
    const Eigen::MatrixXd& entries() const { return A_; }
    Eigen::Index size() const { return A_.rows(); }

    const Eigen::LLT<Eigen::MatrixXd>& chol() const {
        if (!llt_) {
            llt_.emplace(A_);
            if (llt_->info() != Eigen::Success) {
                llt_.reset();
                throw NumericalError("CovMatrix: matrix is not positive definite");
            }
        }
        return *llt_;
    }

    Eigen::MatrixXd lower() const { return chol().matrixL(); }

    Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const { return chol().solve(rhs); }

    // alpha^T A^{-1} alpha through the triangular factor.
    double inverse_quadratic_form(const Eigen::VectorXd& alpha) const {
        if (alpha.size() != A_.rows()) throw InvalidArgument("length mismatch between times and values");
        const Eigen::VectorXd y = chol().matrixL().solve(alpha);
        return y.squaredNorm();
    }

private:
    std::vector<double> times_;
    Eigen::MatrixXd A_;
    mutable std::optional<Eigen::LLT<Eigen::MatrixXd>> llt_;
};

enum class FbmMethod { cholesky, kernel };

// Sampled paths: one row per path, one column per grid time.
struct PathMatrix {
    std::vector<double> times;
    std::vector<std::uint64_t> seeds;
    Eigen::MatrixXd values;
};

// Weights of the kernel-discretisation sampler: B(t_i) ~ sum_k W(i,k) Z_k with
// Z_k standard normal, where W(i,k) = sqrt(d_k) * (panel mean of K(t_i, .)).
struct KernelSamplerWeights {
    std::vector<double> nodes;
    Eigen::MatrixXd W;
};

inline KernelSamplerWeights kernel_sampler_weights(const std::vector<double>& grid,
                                                   int panels_per_unit = 2048) {
    if (panels_per_unit < 1) throw InvalidArgument("kernel sampler: panels_per_unit must be positive");
    const double tmax = grid.back();
    const double h = 1.0 / panels_per_unit;
    std::vector<double> nodes{0.0};
    for (std::size_t k = 1; static_cast<double>(k) * h < tmax; ++k) nodes.push_back(static_cast<double>(k) * h);
    for (double t : grid) nodes.push_back(t);
    std::sort(nodes.begin(), nodes.end());
    std::vector<double> merged{nodes.front()};
    for (std::size_t k = 1; k < nodes.size(); ++k)
        if (nodes[k] - merged.back() > 1e-12 * std::max(1.0, nodes[k])) merged.push_back(nodes[k]);
    for (double t : grid)
        for (auto& v : merged)
            if (std::abs(v - t) <= 1e-12 * std::max(1.0, t)) v = t;
    KernelSamplerWeights out;
    out.nodes = merged;
    const auto panels = static_cast<Eigen::Index>(merged.size() - 1);
    out.W = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(grid.size()), panels);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        for (Eigen::Index k = 0; k < panels; ++k) {
            const double lo = merged[k];
            const double hi = merged[k + 1];
            if (hi > grid[i]) break;
            const double d = hi - lo;
            out.W(static_cast<Eigen::Index>(i), k) = kernel_panel_integral(grid[i], lo, hi) / std::sqrt(d);
        }
    }
    return out;
}

// Paths of the Hurst-1/4 process on `grid`. Path p draws its normals from an
// independent generator seeded with derive_seed(seed, p).
inline PathMatrix sample_fbm(const std::vector<double>& grid, std::size_t n_paths, std::uint64_t seed,
                             FbmMethod method, int panels_per_unit = 2048) {
    if (grid.empty()) throw InvalidArgument("sample_fbm: empty grid");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!(grid[i] > 0.0)) throw InvalidArgument("sample_fbm: grid must be positive");
        if (i > 0 && !(grid[i] > grid[i - 1])) throw InvalidArgument("sample_fbm: grid must be strictly increasing");
    }
    PathMatrix out;
    out.times = grid;
    out.seeds.resize(n_paths);
    const auto n = static_cast<Eigen::Index>(grid.size());
    out.values.resize(static_cast<Eigen::Index>(n_paths), n);
    Eigen::MatrixXd W;
    if (method == FbmMethod::cholesky) {
        W = CovMatrix(grid).lower();
    } else {
        W = kernel_sampler_weights(grid, panels_per_unit).W;
    }
    Eigen::VectorXd z(W.cols());
    for (std::size_t p = 0; p < n_paths; ++p) {
        out.seeds[p] = derive_seed(seed, p);
        Xoshiro256 rng(out.seeds[p]);
        for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = rng.normal();
        out.values.row(static_cast<Eigen::Index>(p)) = (W * z).transpose();
    }
    return out;
}

}  // namespace ssep
