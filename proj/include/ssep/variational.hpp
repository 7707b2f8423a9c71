#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/exp_sinh.hpp>

#include "ssep/errors.hpp"
#include "ssep/fbm.hpp"
#include "ssep/muk_field.hpp"
#include "ssep/quadrature.hpp"
#include "ssep/rate.hpp"

namespace ssep {

using cplx = std::complex<double>;

inline constexpr double sqrt_two_pi = 2.5066282746310005024;

// Symmetric uniform frequency grid: xi_k = k * cutoff / steps, |k| <= steps.
struct XiGrid {
    double cutoff = 40.0;
    std::size_t steps = std::size_t{1} << 14;

    double step() const { return cutoff / static_cast<double>(steps); }
    double at(std::ptrdiff_t k) const { return static_cast<double>(k) * step(); }

    void validate() const {
        if (!(cutoff > 0.0) || !std::isfinite(cutoff)) throw InvalidArgument("XiGrid: cutoff must be positive");
        if (steps < 4) throw InvalidArgument("XiGrid: need at least 4 steps");
    }

    static XiGrid for_min_time(double t_min, std::size_t steps = std::size_t{1} << 14) {
        if (!(t_min > 0.0)) throw InvalidArgument("XiGrid: t_min must be positive");
        return XiGrid{40.0 / std::sqrt(t_min), steps};
    }
};

namespace detail {

// (1 - exp(-a xi^2)) / xi^2, continuous at xi = 0.
inline double heat_gap(double a, double xi2) {
    if (a == 0.0) return 0.0;
    if (xi2 == 0.0) return a;
    return -std::expm1(-a * xi2) / xi2;
}

// Inverse transform of heat_gap(a, .):
//   (1/sqrt(2 pi)) [2 sqrt(pi a) exp(-u^2/4a) - pi |u| erfc(|u| / (2 sqrt a))].
inline double atom_G(double a, double u) {
    if (a == 0.0) return 0.0;
    const double au = std::abs(u);
    const double ra = std::sqrt(a);
    return (2.0 * std::sqrt(std::numbers::pi) * ra * std::exp(-u * u / (4.0 * a)) -
            std::numbers::pi * au * std::erfc(au / (2.0 * ra))) /
           sqrt_two_pi;
}

inline double atom_dG(double a, double u) {
    if (a == 0.0 || u == 0.0) return 0.0;
    const double sgn = u > 0.0 ? 1.0 : -1.0;
    return -std::sqrt(std::numbers::pi / 2.0) * sgn * std::erfc(std::abs(u) / (2.0 * std::sqrt(a)));
}

// d/da atom_G(a, u) = exp(-u^2/4a) / sqrt(2a); equals the smooth part of d^2/du^2 atom_G.
inline double atom_dG_da(double a, double u) {
    if (a == 0.0) return 0.0;
    return std::exp(-u * u / (4.0 * a)) / std::sqrt(2.0 * a);
}

}  // namespace detail

// Minimiser of the constrained quadratic problem with K(t_j, 0) = alpha_j:
// a superposition of single-constraint building blocks with weights beta
// solving A D beta = alpha, D = diag(1/sqrt(t_j)).
class Minimizer {
public:
    Minimizer(std::vector<double> times, std::vector<double> alphas, double T)
        : times_(std::move(times)), alphas_(std::move(alphas)), T_(T) {
        if (times_.empty()) throw InvalidArgument("Minimizer: no constraint times");
        if (times_.size() != alphas_.size()) throw InvalidArgument("Minimizer: times and alphas differ in length");
        if (!(T_ > 0.0) || !std::isfinite(T_)) throw InvalidArgument("Minimizer: horizon must be positive");
        for (double a : alphas_)
            if (!std::isfinite(a)) throw InvalidArgument("Minimizer: alphas must be finite");
        if (times_.back() > T_) throw InvalidArgument("Minimizer: constraint times must not exceed the horizon");
        const CovMatrix A(times_);
        Eigen::VectorXd al(static_cast<Eigen::Index>(alphas_.size()));
        for (std::size_t j = 0; j < alphas_.size(); ++j) al[static_cast<Eigen::Index>(j)] = alphas_[j];
        const Eigen::VectorXd y = A.solve(al);
        if (!y.allFinite()) throw NumericalError("Minimizer: singular covariance system");
        betas_.resize(times_.size());
        coef_.resize(times_.size());
        for (std::size_t j = 0; j < times_.size(); ++j) {
            betas_[j] = std::sqrt(times_[j]) * y[static_cast<Eigen::Index>(j)];
            coef_[j] = betas_[j] / (2.0 * std::sqrt(times_[j]));
        }
    }

    static Minimizer single(double t, double alpha, double T) { return Minimizer({t}, {alpha}, T); }

    const std::vector<double>& times() const { return times_; }
    const std::vector<double>& alphas() const { return alphas_; }
    const std::vector<double>& betas() const { return betas_; }
    double horizon() const { return T_; }
    std::size_t size() const { return times_.size(); }

    std::vector<double> breakpoints() const {
        std::vector<double> b{0.0};
        for (double t : times_)
            if (t > b.back()) b.push_back(t);
        if (T_ > b.back()) b.push_back(T_);
        return b;
    }

    // Fourier side. The transform of K is real and even in xi; the transform
    // of mu0 is purely imaginary and odd, returned here as its imaginary part.
    double khat(double s, double xi) const {
        const double x2 = xi * xi;
        double v = 0.0;
        for (std::size_t j = 0; j < times_.size(); ++j) {
            const double t = times_[j];
            v += coef_[j] * (detail::heat_gap(0.5 * t, x2) - detail::heat_gap(0.5 * std::abs(t - s), x2) +
                             detail::heat_gap(0.5 * s, x2));
        }
        return v;
    }

    double dkhat_ds(double s, double xi) const {
        const double x = 0.5 * xi * xi;
        double v = 0.0;
        for (std::size_t j = 0; j < times_.size(); ++j) {
            const double t = times_[j];
            const double near = std::exp(-std::abs(t - s) * x);
            v += coef_[j] * 0.5 * ((s < t ? near : -near) + std::exp(-s * x));
        }
        return v;
    }

    double mu0hat_imag(double xi) const {
        const double x2 = xi * xi;
        double v = 0.0;
        for (std::size_t j = 0; j < times_.size(); ++j) v += coef_[j] * detail::heat_gap(0.5 * times_[j], x2);
        return -xi * v;
    }

    // Real-space fields.
    double K(double s, double u) const {
        double v = 0.0;
        for (std::size_t j = 0; j < times_.size(); ++j) {
            const double t = times_[j];
            v += coef_[j] *
                 (detail::atom_G(0.5 * t, u) - detail::atom_G(0.5 * std::abs(t - s), u) + detail::atom_G(0.5 * s, u));
        }
        return v;
    }

    double mu0(double u) const {
        double v = 0.0;
        for (std::size_t j = 0; j < times_.size(); ++j) v += coef_[j] * detail::atom_dG(0.5 * times_[j], u);
        return v;
    }

    // mu(s,u) = mu0(u) - dK/du(s,u).
    double mu(double s, double u) const {
        double v = 0.0;
        for (std::size_t j = 0; j < times_.size(); ++j)
            v += coef_[j] * (detail::atom_dG(0.5 * std::abs(times_[j] - s), u) - detail::atom_dG(0.5 * s, u));
        return v;
    }

    double dK_du(double s, double u) const { return mu0(u) - mu(s, u); }

    // chi * dH/du: a backward heat kernel before each constraint time, zero after.
    double control_gradient(double s, double u) const {
        double v = 0.0;
        for (std::size_t j = 0; j < times_.size(); ++j) {
            const double gap = times_[j] - s;
            if (gap > 0.0) v += coef_[j] * std::exp(-u * u / (2.0 * gap)) / std::sqrt(gap);
        }
        return v;
    }

    // chi * H, normalised to be odd in u. At a constraint time it is a step.
    double control(double s, double u) const {
        double v = 0.0;
        for (std::size_t j = 0; j < times_.size(); ++j) {
            const double gap = times_[j] - s;
            if (gap > 0.0) v += coef_[j] * sqrt_two_pi * 0.5 * std::erf(u / std::sqrt(2.0 * gap));
            else if (gap == 0.0 && u != 0.0) v += coef_[j] * sqrt_two_pi * (u > 0.0 ? 0.5 : -0.5);
        }
        return v;
    }

    // K(s, 0) in closed form: sum_j beta_j a(t_j, s) / sqrt(t_j).
    double current_at_origin(double s) const {
        double v = 0.0;
        for (std::size_t j = 0; j < times_.size(); ++j) v += betas_[j] * cov_a(times_[j], s) / std::sqrt(times_[j]);
        return v;
    }

    // chi * Q_T in closed form: sqrt(2 pi)/4 * alpha^T A^{-1} alpha.
    double closed_form_chi_q() const {
        const CovMatrix A(times_);
        Eigen::VectorXd al(static_cast<Eigen::Index>(alphas_.size()));
        for (std::size_t j = 0; j < alphas_.size(); ++j) al[static_cast<Eigen::Index>(j)] = alphas_[j];
        return sqrt_two_pi / 4.0 * A.inverse_quadratic_form(al);
    }

private:
    std::vector<double> times_;
    std::vector<double> alphas_;
    std::vector<double> betas_;
    std::vector<double> coef_;
    double T_;
};

struct MinimizerSpec {
    std::vector<double> times;
    std::vector<double> alphas;
    double T = 1.0;
    double rho = 0.5;
    std::optional<XiGrid> xi_grid;
};

// Transforms of K(s, .) and mu0 sampled on the full symmetric grid.
struct FourierProfile {
    double s = 0.0;
    std::vector<double> xi;
    std::vector<cplx> K;
    std::vector<cplx> mu0;
};

struct MinimizerProfiles {
    Minimizer minimizer;
    XiGrid grid;
    std::vector<FourierProfile> profiles;
    // Relative mass of |FK(t_j, .)|^2 beyond the cutoff (power-law estimate).
    double tail_mass = 0.0;
    // Change of the tail-corrected integral of |FK(t_j, .)|^2 when the cutoff
    // is halved; this is what the cutoff monitor thresholds.
    double tail_residual = 0.0;
    bool cutoff_ok = true;
};

inline FourierProfile sample_profile(const Minimizer& m, double s, const XiGrid& grid) {
    grid.validate();
    if (s < 0.0 || s > m.horizon()) throw InvalidArgument("sample_profile: s outside [0, T]");
    FourierProfile p;
    p.s = s;
    const auto n = static_cast<std::ptrdiff_t>(grid.steps);
    p.xi.reserve(2 * grid.steps + 1);
    for (std::ptrdiff_t k = -n; k <= n; ++k) {
        const double xi = grid.at(k);
        p.xi.push_back(xi);
        p.K.emplace_back(m.khat(s, xi), 0.0);
        p.mu0.emplace_back(0.0, m.mu0hat_imag(xi));
    }
    return p;
}

// (1/sqrt(2 pi)) sum_k w_k exp(-i u xi_k) v_k with trapezoid weights.
inline cplx inverse_transform(const std::vector<double>& xi, const std::vector<cplx>& values, double u) {
    if (xi.size() != values.size() || xi.size() < 3) throw InvalidArgument("inverse_transform: bad profile");
    const double h = xi[1] - xi[0];
    cplx s = 0.0;
    for (std::size_t k = 0; k < xi.size(); ++k) {
        const double w = (k == 0 || k + 1 == xi.size()) ? 0.5 : 1.0;
        s += w * std::polar(1.0, -u * xi[k]) * values[k];
    }
    return s * h / sqrt_two_pi;
}

// Inverse transform at u = 0 with the C/xi^2 tail beyond the cutoff added
// analytically on both sides.
inline double inverse_transform_at_origin(const std::vector<double>& xi, const std::vector<cplx>& values) {
    const double base = inverse_transform(xi, values, 0.0).real();
    const double tail = (values.front().real() * std::abs(xi.front()) + values.back().real() * xi.back()) / sqrt_two_pi;
    return base + tail;
}

namespace detail {

// Tail-corrected integral over the real line of |FK(t, .)|^2 using grid
// points up to index `kmax`; the integrand decays like xi^-4.
inline double khat_square_integral(const Minimizer& m, double t, const XiGrid& g, std::size_t kmax) {
    double s = 0.0;
    for (std::size_t k = 0; k <= kmax; ++k) {
        const double v = m.khat(t, g.at(static_cast<std::ptrdiff_t>(k)));
        s += (k == 0 || k == kmax ? 0.5 : 1.0) * v * v;
    }
    const double xe = g.at(static_cast<std::ptrdiff_t>(kmax));
    const double ve = m.khat(t, xe);
    return 2.0 * (s * g.step() + ve * ve * xe / 3.0);
}

}  // namespace detail

inline MinimizerProfiles make_profiles(const Minimizer& m, const std::vector<double>& s_values, const XiGrid& grid,
                                       double tail_threshold = 1e-8) {
    grid.validate();
    MinimizerProfiles out{m, grid, {}, 0.0, 0.0, true};
    for (double s : s_values) out.profiles.push_back(sample_profile(m, s, grid));
    for (double t : m.times()) {
        const double full = detail::khat_square_integral(m, t, grid, grid.steps);
        if (!(full > 0.0)) continue;
        const double half = detail::khat_square_integral(m, t, grid, grid.steps / 2);
        const double ve = m.khat(t, grid.cutoff);
        out.tail_mass = std::max(out.tail_mass, 2.0 * ve * ve * grid.cutoff / 3.0 / full);
        out.tail_residual = std::max(out.tail_residual, std::abs(full - half) / full);
    }
    out.cutoff_ok = out.tail_residual <= tail_threshold;
    return out;
}

inline MinimizerProfiles single_time_minimizer(double t, double alpha, double T, const std::vector<double>& s_values,
                                               std::optional<XiGrid> grid = std::nullopt) {
    if (!(t > 0.0) || t > T) throw InvalidArgument("single_time_minimizer: requires 0 < t <= T");
    return make_profiles(Minimizer::single(t, alpha, T), s_values, grid.value_or(XiGrid::for_min_time(t)));
}

inline MinimizerProfiles multi_time_minimizer(const MinimizerSpec& spec, const std::vector<double>& s_values) {
    check_density(spec.rho);
    Minimizer m(spec.times, spec.alphas, spec.T);
    return make_profiles(m, s_values, spec.xi_grid.value_or(XiGrid::for_min_time(m.times().front())));
}

// A path described by the transforms of K and mu0 as functions of (s, xi).
// Breakpoints are the times where d/ds FK may jump; they include 0 and T.
struct FourierField {
    std::function<cplx(double, double)> K;
    std::function<cplx(double, double)> dK;
    std::function<cplx(double)> mu0;
    std::vector<double> breakpoints;
    double T = 1.0;
};

inline FourierField fourier_field(const Minimizer& m) {
    FourierField f;
    f.K = [m](double s, double xi) { return cplx(m.khat(s, xi), 0.0); };
    f.dK = [m](double s, double xi) { return cplx(m.dkhat_ds(s, xi), 0.0); };
    f.mu0 = [m](double xi) { return cplx(0.0, m.mu0hat_imag(xi)); };
    f.breakpoints = m.breakpoints();
    f.T = m.horizon();
    return f;
}

inline FourierField operator+(const FourierField& a, const FourierField& b) {
    if (a.T != b.T) throw InvalidArgument("FourierField: horizons differ");
    FourierField f;
    f.K = [a, b](double s, double xi) { return a.K(s, xi) + b.K(s, xi); };
    f.dK = [a, b](double s, double xi) { return a.dK(s, xi) + b.dK(s, xi); };
    f.mu0 = [a, b](double xi) { return a.mu0(xi) + b.mu0(xi); };
    f.breakpoints = a.breakpoints;
    f.breakpoints.insert(f.breakpoints.end(), b.breakpoints.begin(), b.breakpoints.end());
    std::sort(f.breakpoints.begin(), f.breakpoints.end());
    f.breakpoints.erase(std::unique(f.breakpoints.begin(), f.breakpoints.end()), f.breakpoints.end());
    f.T = a.T;
    return f;
}

inline FourierField scaled(const FourierField& a, double c) {
    FourierField f = a;
    f.K = [a, c](double s, double xi) { return c * a.K(s, xi); };
    f.dK = [a, c](double s, double xi) { return c * a.dK(s, xi); };
    f.mu0 = [a, c](double xi) { return c * a.mu0(xi); };
    return f;
}

// Time quadrature for the Parseval integrals: Gauss-Legendre panels on each
// segment between breakpoints, geometrically graded towards both ends where
// the transforms have boundary layers of width ~ 1/xi^2.
struct TimeQuadrature {
    double first_fraction = 1e-7;
    double ratio = 2.0;
};

struct ParsevalBreakdown {
    double value = 0.0;                 // chi * Q_T (or the bilinear value)
    std::vector<double> breakpoints;    // segment boundaries in s
    std::vector<double> segments;       // time-integral contribution of each segment
    double boundary = 0.0;              // the two terms involving mu0 and FK(T)
    double tail_correction = 0.0;       // part of `value` added for |xi| > cutoff
};

namespace detail {

struct SNode {
    double s;
    double w;
    std::size_t segment;
};

inline std::vector<SNode> parseval_time_nodes(const std::vector<double>& bps, const TimeQuadrature& q) {
    const auto& rule = gauss_legendre_unit<8>();
    std::vector<SNode> nodes;
    for (std::size_t seg = 0; seg + 1 < bps.size(); ++seg) {
        const double a = bps[seg], b = bps[seg + 1];
        const double half = 0.5 * (b - a);
        std::vector<double> offs{0.0};
        double w = std::min(q.first_fraction * (b - a), half);
        while (offs.back() + w < half * (1.0 - 1e-12)) {
            offs.push_back(offs.back() + w);
            w *= q.ratio;
        }
        offs.push_back(half);
        std::vector<double> edges;
        for (double o : offs) edges.push_back(a + o);
        for (std::size_t i = offs.size() - 1; i-- > 0;) edges.push_back(b - offs[i]);
        for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
            const double lo = edges[p], hi = edges[p + 1];
            if (!(hi > lo)) continue;
            for (std::size_t k = 0; k < rule.x.size(); ++k)
                nodes.push_back({lo + (hi - lo) * rule.x[k], (hi - lo) * rule.w[k], seg});
        }
    }
    return nodes;
}

inline double re_dot(cplx a, cplx b) { return a.real() * b.real() + a.imag() * b.imag(); }

}  // namespace detail

// Bilinear Parseval form: integral over s in [0,T] and xi in R of
//   1/2 dFK1 conj(dFK2) + 1/8 g1 conj(g2),  g = -i xi Fmu0 + xi^2 FK(s),
// plus 1/4 integral over xi of Fmu0_1 conj(Fmu0_2) + b1 conj(b2), b = Fmu0 + i xi FK(T).
// The xi integral is a trapezoid on [0, cutoff] (the integrand is even) with
// the C/xi^2 tail added analytically.
inline ParsevalBreakdown parseval_bilinear(const FourierField& f, const FourierField& g, const XiGrid& grid,
                                           const TimeQuadrature& tq = {}) {
    grid.validate();
    if (f.T != g.T) throw InvalidArgument("parseval: horizons differ");
    const double T = f.T;
    std::vector<double> bps = f.breakpoints;
    bps.insert(bps.end(), g.breakpoints.begin(), g.breakpoints.end());
    bps.push_back(0.0);
    bps.push_back(T);
    std::sort(bps.begin(), bps.end());
    bps.erase(std::unique(bps.begin(), bps.end()), bps.end());
    const auto nodes = detail::parseval_time_nodes(bps, tq);
    const std::size_t nseg = bps.size() - 1;

    std::vector<double> seg_sum(nseg, 0.0), seg_last(nseg, 0.0);
    double bnd_sum = 0.0, bnd_last = 0.0;
    const cplx I(0.0, 1.0);
    for (std::size_t k = 0; k <= grid.steps; ++k) {
        const double xi = grid.at(static_cast<std::ptrdiff_t>(k));
        const double wk = (k == 0 || k == grid.steps) ? 0.5 : 1.0;
        const cplx m1 = f.mu0(xi), m2 = g.mu0(xi);
        std::vector<double> seg_val(nseg, 0.0);
        for (const auto& nd : nodes) {
            const cplx g1 = -I * xi * m1 + xi * xi * f.K(nd.s, xi);
            const cplx g2 = -I * xi * m2 + xi * xi * g.K(nd.s, xi);
            seg_val[nd.segment] +=
                nd.w * (0.5 * detail::re_dot(f.dK(nd.s, xi), g.dK(nd.s, xi)) + 0.125 * detail::re_dot(g1, g2));
        }
        const cplx b1 = m1 + I * xi * f.K(T, xi), b2 = m2 + I * xi * g.K(T, xi);
        const double bnd = 0.25 * (detail::re_dot(m1, m2) + detail::re_dot(b1, b2));
        for (std::size_t s = 0; s < nseg; ++s) seg_sum[s] += wk * seg_val[s];
        bnd_sum += wk * bnd;
        if (k == grid.steps) {
            seg_last = seg_val;
            bnd_last = bnd;
        }
    }
    ParsevalBreakdown out;
    out.breakpoints = bps;
    const double h = grid.step();
    for (std::size_t s = 0; s < nseg; ++s) {
        const double tail = 2.0 * seg_last[s] * grid.cutoff;
        out.segments.push_back(2.0 * h * seg_sum[s] + tail);
        out.tail_correction += tail;
        out.value += out.segments.back();
    }
    const double btail = 2.0 * bnd_last * grid.cutoff;
    out.boundary = 2.0 * h * bnd_sum + btail;
    out.tail_correction += btail;
    out.value += out.boundary;
    return out;
}

inline double parseval_chi_q(const FourierField& f, const XiGrid& grid, const TimeQuadrature& tq = {}) {
    return parseval_bilinear(f, f, grid, tq).value;
}

inline double parseval_Q(const FourierField& f, double rho, const XiGrid& grid, const TimeQuadrature& tq = {}) {
    return parseval_chi_q(f, grid, tq) / chi(rho);
}

inline double parseval_Q(const MinimizerProfiles& p, double rho) {
    return parseval_Q(fourier_field(p.minimizer), rho, p.grid);
}

struct QjkResult {
    double value = 0.0;
    double closed_form = 0.0;
    ParsevalBreakdown breakdown;  // segments are A(0,t_j), A(t_j,t_k), A(t_k,T)
};

// Parseval pairing of the unit building blocks at t_j and t_k; the closed
// form is sqrt(2 pi) / (4 sqrt(t_j t_k)) * a(t_j, t_k).
inline QjkResult q_jk_quadrature(double tj, double tk, double T, std::optional<XiGrid> grid = std::nullopt) {
    if (!(tj > 0.0) || !(tk > 0.0) || tj > T || tk > T) throw InvalidArgument("q_jk: requires 0 < t_j, t_k <= T");
    const XiGrid g = grid.value_or(XiGrid::for_min_time(std::min(tj, tk)));
    QjkResult r;
    r.breakdown = parseval_bilinear(fourier_field(Minimizer::single(tj, 1.0, T)),
                                    fourier_field(Minimizer::single(tk, 1.0, T)), g);
    r.value = r.breakdown.value;
    r.closed_form = sqrt_two_pi / (4.0 * std::sqrt(tj * tk)) * cov_a(tj, tk);
    return r;
}

struct IntegralFormulaCheck {
    double numeric = 0.0;
    double closed_form = 0.0;
};

// integral over R of (1 - exp(-a xi^2)) / xi^2 versus 2 sqrt(pi a).
inline IntegralFormulaCheck integral_formula_check(double a) {
    if (!(a > 0.0)) throw InvalidArgument("integral_formula_check: a must be positive");
    boost::math::quadrature::exp_sinh<double> integrator;
    const double half = integrator.integrate([a](double xi) { return detail::heat_gap(a, xi * xi); }, 0.0,
                                             std::numeric_limits<double>::infinity(), 1e-14);
    return {2.0 * half, 2.0 * std::sqrt(std::numbers::pi * a)};
}

// Real-space reconstruction grids for the staggered (mu0, K) layout.
struct MuKGridOptions {
    double extent_factor = 10.0;  // U = extent_factor * sqrt(T)
    double u_hmin = 1e-4;
    double u_hmax = 0.01;
    double u_ratio = 1.05;
    double t_hmin = 1e-8;
    double t_hmax = 0.01;
    double t_ratio = 1.1;
};

// Samples the closed-form minimiser on a time grid graded towards 0, the
// constraint times and T, and a space grid graded towards u = 0.
inline MuKField minimizer_muk_field(const Minimizer& m, const MuKGridOptions& o = {}) {
    const double T = m.horizon();
    MuKField f;
    f.t = graded_time_grid(T, m.times(), o.t_hmin, o.t_hmax, o.t_ratio);
    f.u = graded_symmetric_grid(o.extent_factor * std::sqrt(T), o.u_hmin, o.u_hmax, o.u_ratio);
    const auto nt = static_cast<Eigen::Index>(f.t.size());
    const auto nu = static_cast<Eigen::Index>(f.u.size());
    f.mu0.resize(nu - 1);
    for (Eigen::Index i = 0; i + 1 < nu; ++i) f.mu0[i] = m.mu0(0.5 * (f.u[i] + f.u[i + 1]));
    f.K.resize(nt, nu);
    for (Eigen::Index n = 0; n < nt; ++n)
        for (Eigen::Index i = 0; i < nu; ++i) f.K(n, i) = n == 0 ? 0.0 : m.K(f.t[n], f.u[i]);
    return f;
}

// ---------------------------------------------------------------------------
// Brute-force oracle. For each frequency the problem decouples: with the
// values FK(t_j, xi) held fixed, the optimal FK(., xi) and Fmu0(xi) follow
// from a P1 finite-element discretisation in time, leaving an n x n Schur
// complement S(xi). FK(t_j, .) is then restricted to Gaussians exp(-y xi^2)
// and the remaining finite-dimensional problem is solved by projected
// conjugate gradients under the constraints K(t_j, 0) = alpha_j.

struct BruteForceOptions {
    std::size_t coefficients = 64;  // total, split evenly over the constraint times
    double y_min = 1e-7;
    double xi_first = 1e-3;
    double xi_max = 3e4;
    std::size_t xi_panels = 120;
    double mesh_layer = 0.05;
    double mesh_hmax = 0.05;
    double mesh_ratio = 1.25;
    std::size_t max_iterations = 20000;
    std::size_t energy_delay = 10;
    double energy_tolerance = 1e-10;
    double tolerance = 1e-10;
};

struct BruteForceResult {
    double Q = 0.0;
    double chi_q = 0.0;
    std::size_t iterations = 0;
    Eigen::VectorXd coefficients;
    std::vector<double> scales;
};

namespace detail {

// Solves a symmetric positive definite tridiagonal system in place.
inline void thomas_solve(const std::vector<double>& diag, const std::vector<double>& off, std::vector<double>& rhs) {
    const std::size_t n = diag.size();
    std::vector<double> c(n, 0.0);
    double denom = diag[0];
    c[0] = n > 1 ? off[0] / denom : 0.0;
    rhs[0] /= denom;
    for (std::size_t i = 1; i < n; ++i) {
        denom = diag[i] - off[i - 1] * c[i - 1];
        if (i + 1 < n) c[i] = off[i] / denom;
        rhs[i] = (rhs[i] - off[i - 1] * rhs[i - 1]) / denom;
    }
    for (std::size_t i = n - 1; i-- > 0;) rhs[i] -= c[i] * rhs[i + 1];
}

// Schur complement of the per-frequency quadratic form onto the values at
// the constraint times. Unknowns are k(s_1..s_N) (k(0) = 0) and m, with
// Fmu0 = i m, FK = k, and energy
//   1/2 int k'^2 + 1/8 int (xi m + xi^2 k)^2 + 1/4 [m^2 + (m + xi k(T))^2].
inline Eigen::MatrixXd time_schur(double T, const std::vector<double>& times, double xi,
                                  const BruteForceOptions& o) {
    const double x2 = xi * xi;
    const double h0 = x2 > 0.0 ? std::min(o.mesh_hmax, o.mesh_layer / x2) : o.mesh_hmax;
    const auto s = graded_time_grid(T, times, h0, o.mesh_hmax, o.mesh_ratio);
    const std::size_t N = s.size() - 1;
    std::vector<double> diag(N, 0.0), off(N > 0 ? N - 1 : 0, 0.0), border(N, 0.0);
    const double x3 = x2 * xi, x4 = x2 * x2;
    for (std::size_t e = 0; e < N; ++e) {
        const double h = s[e + 1] - s[e];
        // element nodes e and e+1; unknown index = node - 1
        const double kd = 0.5 / h + x4 * h / 24.0;
        const double ko = -0.5 / h + x4 * h / 48.0;
        const double kb = x3 * h / 16.0;
        if (e >= 1) {
            diag[e - 1] += kd;
            off[e - 1] += ko;
            border[e - 1] += kb;
        }
        diag[e] += kd;
        border[e] += kb;
    }
    double qmm = x2 * T / 8.0 + 0.5;
    diag[N - 1] += x2 / 4.0;
    border[N - 1] += xi / 4.0;

    std::vector<std::size_t> fixed;
    for (double t : times) {
        const auto it = std::lower_bound(s.begin(), s.end(), t);
        if (it == s.end() || *it != t) throw NumericalError("brute force: constraint time missing from mesh");
        fixed.push_back(static_cast<std::size_t>(it - s.begin()) - 1);
    }
    std::vector<char> is_fixed(N, 0);
    for (auto f : fixed) is_fixed[f] = 1;

    // Reduced chain: fixed rows become identity rows decoupled from the rest.
    std::vector<double> rd = diag, ro = off, rb = border;
    for (std::size_t i = 0; i < N; ++i)
        if (is_fixed[i]) {
            rd[i] = 1.0;
            rb[i] = 0.0;
            if (i > 0) ro[i - 1] = 0.0;
            if (i + 1 < N) ro[i] = 0.0;
        }
    std::vector<double> z2 = rb;
    thomas_solve(rd, ro, z2);
    double bz2 = 0.0;
    for (std::size_t i = 0; i < N; ++i) bz2 += rb[i] * z2[i];
    const double schur_m = qmm - bz2;

    const std::size_t n = fixed.size();
    std::vector<std::vector<double>> rchain(n, std::vector<double>(N, 0.0));
    std::vector<double> rm(n);
    std::vector<std::vector<double>> xchain(n);
    std::vector<double> xm(n);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t f = fixed[j];
        if (f > 0 && !is_fixed[f - 1]) rchain[j][f - 1] = off[f - 1];
        if (f + 1 < N && !is_fixed[f + 1]) rchain[j][f + 1] = off[f];
        rm[j] = border[f];
        std::vector<double> z1 = rchain[j];
        thomas_solve(rd, ro, z1);
        double bz1 = 0.0;
        for (std::size_t i = 0; i < N; ++i) bz1 += rb[i] * z1[i];
        const double y = (rm[j] - bz1) / schur_m;
        xchain[j].resize(N);
        for (std::size_t i = 0; i < N; ++i) xchain[j][i] = z1[i] - y * z2[i];
        xm[j] = y;
    }
    Eigen::MatrixXd S(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t l = 0; l < n; ++l) {
            double q = 0.0;
            if (j == l) q = diag[fixed[j]];
            else if (fixed[l] == fixed[j] + 1) q = off[fixed[j]];
            else if (fixed[j] == fixed[l] + 1) q = off[fixed[l]];
            double rx = rm[j] * xm[l];
            for (std::size_t i = 0; i < N; ++i) rx += rchain[j][i] * xchain[l][i];
            S(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(l)) = q - rx;
        }
    return 0.5 * (S + S.transpose());
}

}  // namespace detail

inline BruteForceResult brute_force_min(const std::vector<double>& times, const std::vector<double>& alphas, double T,
                                        double rho, const BruteForceOptions& o = {}) {
    check_density(rho);
    if (times.empty() || times.size() > 2) throw InvalidArgument("brute_force_min: supports one or two constraint times");
    if (times.size() != alphas.size()) throw InvalidArgument("brute_force_min: times and alphas differ in length");
    for (std::size_t j = 0; j < times.size(); ++j) {
        if (!(times[j] > 0.0) || times[j] > T) throw InvalidArgument("brute_force_min: times must lie in (0, T]");
        if (j > 0 && !(times[j] > times[j - 1])) throw InvalidArgument("brute_force_min: times must increase");
    }
    const std::size_t n = times.size();
    if (o.coefficients % n != 0 || o.coefficients / n < 2)
        throw InvalidArgument("brute_force_min: coefficients must split into at least two per constraint time");
    const std::size_t nb = o.coefficients / n;
    const auto dim = static_cast<Eigen::Index>(n * nb);

    BruteForceResult res;
    for (std::size_t k = 0; k < nb; ++k)
        res.scales.push_back(o.y_min * std::pow(T / o.y_min, static_cast<double>(k) / static_cast<double>(nb - 1)));

    // Frequency quadrature: one panel on [0, xi_first], then log-spaced panels.
    std::vector<double> edges{0.0};
    for (std::size_t p = 0; p <= o.xi_panels; ++p)
        edges.push_back(o.xi_first *
                        std::pow(o.xi_max / o.xi_first, static_cast<double>(p) / static_cast<double>(o.xi_panels)));
    const auto& rule = gauss_legendre_unit<8>();
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd phi(static_cast<Eigen::Index>(nb));
    for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
        const double lo = edges[p], hi = edges[p + 1];
        for (std::size_t q = 0; q < rule.x.size(); ++q) {
            const double xi = lo + (hi - lo) * rule.x[q];
            const double w = 2.0 * (hi - lo) * rule.w[q];  // both signs of xi
            const Eigen::MatrixXd S = detail::time_schur(T, times, xi, o);
            for (std::size_t k = 0; k < nb; ++k) phi[static_cast<Eigen::Index>(k)] = std::exp(-xi * xi * res.scales[k]);
            const Eigen::MatrixXd outer = phi * phi.transpose();
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t l = 0; l < n; ++l)
                    M.block(static_cast<Eigen::Index>(j * nb), static_cast<Eigen::Index>(l * nb),
                            static_cast<Eigen::Index>(nb), static_cast<Eigen::Index>(nb)) +=
                        w * S(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(l)) * outer;
        }
    }
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), dim);
    Eigen::VectorXd b(static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < nb; ++k)
            B(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j * nb + k)) =
                std::sqrt(std::numbers::pi / res.scales[k]);
        b[static_cast<Eigen::Index>(j)] = sqrt_two_pi * alphas[j];
    }

    // Jacobi scaling, then CG on the null space of the constraints. The
    // Gaussian basis is nearly collinear, so the residual can stall at rounding
    // level while the objective has long converged; the second stopping rule
    // is the delayed estimate of the energy error, sum of alpha_j |r_j|^2 over
    // the last energy_delay steps, which bounds the excess of chi*Q directly.
    const Eigen::VectorXd d = M.diagonal().cwiseSqrt().cwiseInverse();
    const Eigen::MatrixXd Ms = d.asDiagonal() * M * d.asDiagonal();
    const Eigen::MatrixXd Bs = B * d.asDiagonal();
    const Eigen::LDLT<Eigen::MatrixXd> bbt(Bs * Bs.transpose());
    auto project = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd { return v - Bs.transpose() * bbt.solve(Bs * v); };
    Eigen::VectorXd c = Bs.transpose() * bbt.solve(b);
    Eigen::VectorXd r = -project(Ms * c);
    Eigen::VectorXd pdir = r;
    double rr = r.squaredNorm();
    const double stop = o.tolerance * b.norm();
    std::vector<double> energy_steps;
    std::size_t it = 0;
    auto energy_converged = [&] {
        if (energy_steps.size() < o.energy_delay) return false;
        double e = 0.0;
        for (std::size_t j = energy_steps.size() - o.energy_delay; j < energy_steps.size(); ++j) e += energy_steps[j];
        return e <= o.energy_tolerance * c.dot(Ms * c);
    };
    while (std::sqrt(rr) > stop && !energy_converged()) {
        if (it == o.max_iterations) throw NumericalError("brute_force_min: conjugate gradients did not converge");
        const Eigen::VectorXd Ap = project(Ms * pdir);
        const double a = rr / pdir.dot(Ap);
        energy_steps.push_back(a * rr);
        c += a * pdir;
        c -= Bs.transpose() * bbt.solve(Bs * c - b);  // rounding drift off the constraint set
        r -= a * Ap;
        const double rn = r.squaredNorm();
        pdir = r + (rn / rr) * pdir;
        rr = rn;
        ++it;
    }
    if ((Bs * c - b).norm() > 1e-8 * b.norm())
        throw NumericalError("brute_force_min: constraints lost to rounding");
    res.iterations = it;
    res.coefficients = d.asDiagonal() * c;
    res.chi_q = c.dot(Ms * c);
    res.Q = res.chi_q / chi(rho);
    return res;
}

}  // namespace ssep
