#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <functional>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <fftw3.h>

#include "ssep/errors.hpp"
#include "ssep/muk_field.hpp"
#include "ssep/rate.hpp"
#include "ssep/variational.hpp"

namespace ssep {

// Uniform space-time grid. Times t_n = n dt for n = 0..nt; space nodes
// u_k = -U + k du for k = 0..nu-1 with nu even, treated as periodic so that
// u = 0 is node nu/2 and +U is identified with -U.
struct FieldGrid {
    double T = 1.0;
    std::size_t nt = 2000;
    double U = 10.0;
    std::size_t nu = 2000;

    double dt() const { return T / static_cast<double>(nt); }
    double du() const { return 2.0 * U / static_cast<double>(nu); }
    double t(std::size_t n) const { return n == nt ? T : static_cast<double>(n) * dt(); }
    double u(std::size_t k) const { return -U + static_cast<double>(k) * du(); }
    std::size_t origin() const { return nu / 2; }

    std::vector<double> times() const {
        std::vector<double> v(nt + 1);
        for (std::size_t n = 0; n <= nt; ++n) v[n] = t(n);
        return v;
    }
    std::vector<double> nodes() const {
        std::vector<double> v(nu);
        for (std::size_t k = 0; k < nu; ++k) v[k] = u(k);
        return v;
    }

    void validate() const {
        if (!(T > 0.0) || !(U > 0.0)) throw InvalidArgument("FieldGrid: T and U must be positive");
        if (nt < 1) throw InvalidArgument("FieldGrid: need at least one time step");
        if (nu < 8 || nu % 2 != 0) throw InvalidArgument("FieldGrid: nu must be even and at least 8");
    }

    // Steps are rounded so that T/dt and U/du are integers.
    static FieldGrid with_steps(double T, double dt, double U, double du) {
        if (!(T > 0.0) || !(dt > 0.0) || !(U > 0.0) || !(du > 0.0))
            throw InvalidArgument("FieldGrid: steps and extents must be positive");
        FieldGrid g;
        g.T = T;
        g.nt = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(T / dt)));
        const auto half = std::max<std::size_t>(4, static_cast<std::size_t>(std::ceil(U / du - 1e-9)));
        g.nu = 2 * half;
        g.U = static_cast<double>(half) * du;
        g.validate();
        return g;
    }

    // du = 0.01, dt = 5e-4, U = 10 sqrt(T).
    static FieldGrid defaults(double T) { return with_steps(T, 5e-4, 10.0 * std::sqrt(T), 0.01); }
};

using FieldArray = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Discretised trajectory: rows are times, columns are space nodes.
struct GridField {
    FieldGrid grid;
    double rho = 0.5;
    Eigen::VectorXd psi;  // mu(0, .)
    FieldArray H;         // control
    FieldArray mu;
    FieldArray K;  // time-integrated current
};

inline double heat_kernel(double t, double u) {
    if (!(t > 0.0)) throw InvalidArgument("heat_kernel: t must be positive");
    return std::exp(-u * u / (2.0 * t)) / std::sqrt(2.0 * std::numbers::pi * t);
}

namespace detail {

class RealFft {
public:
    explicit RealFft(std::size_t n)
        : n_(n), real_(fftw_alloc_real(n)), spec_(fftw_alloc_complex(n / 2 + 1)) {
        if (!real_ || !spec_) throw NumericalError("RealFft: allocation failed");
        const int ni = static_cast<int>(n);
        fwd_ = fftw_plan_dft_r2c_1d(ni, real_, spec_, FFTW_ESTIMATE);
        inv_ = fftw_plan_dft_c2r_1d(ni, spec_, real_, FFTW_ESTIMATE);
    }
    RealFft(const RealFft&) = delete;
    RealFft& operator=(const RealFft&) = delete;
    ~RealFft() {
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(inv_);
        fftw_free(real_);
        fftw_free(spec_);
    }

    std::size_t modes() const { return n_ / 2 + 1; }

    void forward(const double* in, std::complex<double>* out) {
        std::memcpy(real_, in, n_ * sizeof(double));
        fftw_execute(fwd_);
        std::memcpy(static_cast<void*>(out), spec_, modes() * sizeof(fftw_complex));
    }

    // Normalised inverse.
    void inverse(const std::complex<double>* in, double* out) {
        std::memcpy(spec_, static_cast<const void*>(in), modes() * sizeof(fftw_complex));
        fftw_execute(inv_);
        const double s = 1.0 / static_cast<double>(n_);
        for (std::size_t k = 0; k < n_; ++k) out[k] = real_[k] * s;
    }

private:
    std::size_t n_;
    double* real_;
    fftw_complex* spec_;
    fftw_plan fwd_{};
    fftw_plan inv_{};
};

// Weights of the exponential integrator over one step of length dt for
// y' = -lambda y + s(t) with s linear on the step, z = lambda dt:
//   y1 = decay y0 + dt (left s0 + right s1)
//   int_0^dt y = dt int_decay y0 + dt^2 (int_left s0 + int_right s1)
struct StepWeights {
    double decay, left, right, int_decay, int_left, int_right;
};

inline StepWeights step_weights(double z) {
    StepWeights w{};
    if (z < 0.05) {
        // Taylor series in z; q = (-z)^(k-1) / k!.
        double e1 = 1.0, phi = 0.5, rest = 0.5, pa = 0.0, pb = 0.0, q = 1.0;
        for (int k = 1; k <= 10; ++k) {
            const double term = -z * q;  // (-z)^k / k!
            e1 += term / (k + 1);
            phi += term / (k + 2);
            rest += term / ((k + 1) * (k + 2));
            pa += q / (k + 2);
            pb += q / ((k + 1) * (k + 2));
            q *= -z / (k + 1);
        }
        w.decay = std::exp(-z);
        w.int_decay = e1;
        w.left = phi;
        w.right = rest;
        w.int_left = pa;
        w.int_right = pb;
        return w;
    }
    const double e = std::exp(-z);
    const double em = -std::expm1(-z);
    const double e1 = em / z;
    const double phi = (em - z * e) / (z * z);
    w.decay = e;
    w.int_decay = e1;
    w.left = phi;
    w.right = e1 - phi;
    w.int_left = (0.5 - phi) / z;
    w.int_right = (0.5 - (e1 - phi)) / z;
    return w;
}

// Centred difference in u, one-sided at the two ends.
inline void space_gradient(const double* f, std::size_t n, double du, double* out) {
    out[0] = (f[1] - f[0]) / du;
    out[n - 1] = (f[n - 1] - f[n - 2]) / du;
    for (std::size_t k = 1; k + 1 < n; ++k) out[k] = (f[k + 1] - f[k - 1]) / (2.0 * du);
}

inline double outer_band_max(const double* f, const FieldGrid& g) {
    double m = 0.0;
    for (std::size_t k = 0; k < g.nu; ++k)
        if (std::abs(g.u(k)) > 0.9 * g.U) m = std::max(m, std::abs(f[k]));
    return m;
}

inline double trapezoid_time_weight(const FieldGrid& g, std::size_t n) {
    return (n == 0 || n == g.nt) ? 0.5 * g.dt() : g.dt();
}

}  // namespace detail

inline constexpr double support_threshold = 1e-8;

// Solution formula mu = p_t * psi - chi int p'_{t-s} * dH/du ds, evaluated
// spectrally: in Fourier space mu' = -(xi^2/2) mu - chi i xi G with G = dH/du
// (centred differences), G taken piecewise linear in time and integrated
// exactly. K = int J ds with J = -1/2 dmu/du + chi G is accumulated in the same
// pass with the exact step integral of mu. Throws SupportError if psi, dH/du or
// the final mu exceed the support threshold on the outer 10% of the grid.
inline GridField evolve_mu(const Eigen::VectorXd& psi, const FieldArray& H, const FieldGrid& grid, double rho) {
    grid.validate();
    const double c = chi(rho);
    const std::size_t nu = grid.nu, nt = grid.nt;
    if (static_cast<std::size_t>(psi.size()) != nu) throw InvalidArgument("evolve_mu: psi has wrong size");
    if (static_cast<std::size_t>(H.rows()) != nt + 1 || static_cast<std::size_t>(H.cols()) != nu)
        throw InvalidArgument("evolve_mu: H has wrong shape");
    if (detail::outer_band_max(psi.data(), grid) > support_threshold)
        throw SupportError("evolve_mu: initial profile leaks into the outer 10% of the grid");

    GridField f;
    f.grid = grid;
    f.rho = rho;
    f.psi = psi;
    f.H = H;
    f.mu.resize(static_cast<Eigen::Index>(nt + 1), static_cast<Eigen::Index>(nu));
    f.K.resize(static_cast<Eigen::Index>(nt + 1), static_cast<Eigen::Index>(nu));

    detail::RealFft fft(nu);
    const std::size_t nm = fft.modes();
    const double dt = grid.dt();
    const double dxi = 2.0 * std::numbers::pi / (static_cast<double>(nu) * grid.du());
    std::vector<detail::StepWeights> w(nm);
    std::vector<double> xi(nm);
    for (std::size_t m = 0; m < nm; ++m) {
        xi[m] = static_cast<double>(m) * dxi;
        w[m] = detail::step_weights(0.5 * xi[m] * xi[m] * dt);
    }

    using cplx = std::complex<double>;
    const cplx I(0.0, 1.0);
    std::vector<cplx> muh(nm), kh(nm, 0.0), g0(nm), g1(nm);
    std::vector<double> grad(nu);

    auto control_spectrum = [&](std::size_t n, std::vector<cplx>& out) {
        detail::space_gradient(f.H.row(static_cast<Eigen::Index>(n)).data(), nu, grid.du(), grad.data());
        if (detail::outer_band_max(grad.data(), grid) > support_threshold)
            throw SupportError("evolve_mu: control gradient leaks into the outer 10% of the grid");
        fft.forward(grad.data(), out.data());
    };

    fft.forward(psi.data(), muh.data());
    f.mu.row(0) = psi.transpose();
    f.K.row(0).setZero();
    control_spectrum(0, g0);
    for (std::size_t n = 0; n < nt; ++n) {
        control_spectrum(n + 1, g1);
        for (std::size_t m = 0; m < nm; ++m) {
            const auto& wm = w[m];
            const cplx s0 = -c * I * xi[m] * g0[m];
            const cplx s1 = -c * I * xi[m] * g1[m];
            const cplx mu_int = dt * wm.int_decay * muh[m] + dt * dt * (wm.int_left * s0 + wm.int_right * s1);
            kh[m] += -0.5 * I * xi[m] * mu_int + c * 0.5 * dt * (g0[m] + g1[m]);
            muh[m] = wm.decay * muh[m] + dt * (wm.left * s0 + wm.right * s1);
        }
        fft.inverse(muh.data(), f.mu.row(static_cast<Eigen::Index>(n + 1)).data());
        fft.inverse(kh.data(), f.K.row(static_cast<Eigen::Index>(n + 1)).data());
        std::swap(g0, g1);
    }
    if (detail::outer_band_max(f.mu.row(static_cast<Eigen::Index>(nt)).data(), grid) > support_threshold)
        throw SupportError("evolve_mu: final density leaks into the outer 10% of the grid");
    return f;
}

// Samples psi(u) and H(t,u) on the grid and evolves.
inline GridField make_grid_field(const FieldGrid& grid, double rho, const std::function<double(double)>& psi,
                                 const std::function<double(double, double)>& H) {
    grid.validate();
    Eigen::VectorXd p(static_cast<Eigen::Index>(grid.nu));
    FieldArray h(static_cast<Eigen::Index>(grid.nt + 1), static_cast<Eigen::Index>(grid.nu));
    for (std::size_t k = 0; k < grid.nu; ++k) p[static_cast<Eigen::Index>(k)] = psi(grid.u(k));
    for (std::size_t n = 0; n <= grid.nt; ++n)
        for (std::size_t k = 0; k < grid.nu; ++k) h(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k)) = H(grid.t(n), grid.u(k));
    return evolve_mu(p, h, grid, rho);
}

// Minimizer of the constrained problem driven through the solution formula:
// psi = its mu0 and H = its control (which tends to different constants at
// +-infinity; only its gradient enters and that is Gaussian-localised).
inline GridField minimizer_grid_field(const Minimizer& m, double rho, const FieldGrid& grid) {
    if (std::abs(grid.T - m.horizon()) > 1e-12) throw InvalidArgument("minimizer_grid_field: horizon mismatch");
    const double c = chi(rho);
    return make_grid_field(
        grid, rho, [&](double u) { return m.mu0(u); }, [&](double t, double u) { return m.control(t, u) / c; });
}

inline double q_zero(const Eigen::VectorXd& psi, double du, double rho) {
    return psi.squaredNorm() * du / (2.0 * chi(rho));
}

// chi/2 [H,H] with centred differences in u and the trapezoid rule in t.
inline double q_dyn(const FieldArray& H, const FieldGrid& grid, double rho) {
    const double c = chi(rho);
    std::vector<double> grad(grid.nu);
    double s = 0.0;
    for (std::size_t n = 0; n <= grid.nt; ++n) {
        detail::space_gradient(H.row(static_cast<Eigen::Index>(n)).data(), grid.nu, grid.du(), grad.data());
        double row = 0.0;
        for (double g : grad) row += g * g;
        s += detail::trapezoid_time_weight(grid, n) * row * grid.du();
    }
    return 0.5 * c * s;
}

inline double q_dyn(const GridField& f) { return q_dyn(f.H, f.grid, f.rho); }
inline double q_zero(const GridField& f) { return q_zero(f.psi, f.grid.du(), f.rho); }

// Staggered (mu0, K) view used by lambda_form: K on the nodes, mu0 averaged to cell centres.
inline MuKField to_muk(const GridField& f) {
    MuKField m;
    m.t = f.grid.times();
    m.u = f.grid.nodes();
    m.K = f.K;
    m.mu0.resize(static_cast<Eigen::Index>(f.grid.nu - 1));
    for (Eigen::Index i = 0; i + 1 < f.psi.size(); ++i) m.mu0[i] = 0.5 * (f.psi[i] + f.psi[i + 1]);
    return m;
}

// int_0^t p'_s(v) ds = -sign(v) erfc(|v| / sqrt(2t)).
inline double integrated_pprime(double t, double v) {
    if (v == 0.0) return 0.0;
    return (v > 0.0 ? -1.0 : 1.0) * std::erfc(std::abs(v) / std::sqrt(2.0 * t));
}

struct FieldCurrentPoint {
    double t = 0.0;
    double rhs = 0.0;            // primary value
    double rhs_initial = 0.0;    // 1/2 int int p'_s psi
    double rhs_control = 0.0;    // chi int int p_{t-s} dH/dv
    double lhs = 0.0;            // int_0^edge [mu_t - psi]
    double residual = 0.0;       // lhs - rhs
    double tail = 0.0;           // int over the outer 10% of |mu_t - psi|
    double moment_quarter = 0.0; // (1/M) int_0^M u [mu_t - psi], M = U/4
    double moment_half = 0.0;    // same with M = U/2
    bool moment_decreasing = true;
};

// Both sides of the current identity
//   int_0^inf [mu_t - psi] = int_0^t int [1/2 p'_s(v) psi(v) + chi p_{t-s}(v) dH/dv(s,v)] dv ds
// at every grid time. The psi term uses the closed-form time integral of p'_s
// and the trapezoid rule in v; the control term evaluates (p_tau * G)(0)
// spectrally with the exact exponential weights in time. The left side is the
// trapezoid rule from u = 0 to the grid edge.
inline std::vector<FieldCurrentPoint> field_current(const GridField& f) {
    const FieldGrid& g = f.grid;
    const double c = chi(f.rho);
    const std::size_t nu = g.nu, nt = g.nt, o = g.origin();
    const double du = g.du(), dt = g.dt();

    detail::RealFft fft(nu);
    const std::size_t nm = fft.modes();
    const double dxi = 2.0 * std::numbers::pi / (static_cast<double>(nu) * du);
    std::vector<detail::StepWeights> w(nm);
    for (std::size_t m = 0; m < nm; ++m) {
        const double x = static_cast<double>(m) * dxi;
        w[m] = detail::step_weights(0.5 * x * x * dt);
    }
    using cplx = std::complex<double>;
    std::vector<cplx> acc(nm, 0.0), g0(nm), g1(nm);
    std::vector<double> grad(nu);
    auto spectrum = [&](std::size_t n, std::vector<cplx>& out) {
        detail::space_gradient(f.H.row(static_cast<Eigen::Index>(n)).data(), nu, du, grad.data());
        fft.forward(grad.data(), out.data());
    };
    // Value at u = 0 (node nu/2) of the inverse transform: phase (-1)^m.
    auto at_origin = [&](const std::vector<cplx>& v) {
        double s = v[0].real();
        for (std::size_t m = 1; m + 1 < nm; ++m) s += 2.0 * (m % 2 == 0 ? 1.0 : -1.0) * v[m].real();
        s += ((nm - 1) % 2 == 0 ? 1.0 : -1.0) * v[nm - 1].real();
        return s / static_cast<double>(nu);
    };

    std::vector<FieldCurrentPoint> out(nt + 1);
    spectrum(0, g0);
    for (std::size_t n = 0; n <= nt; ++n) {
        if (n > 0) {
            spectrum(n, g1);
            for (std::size_t m = 0; m < nm; ++m)
                acc[m] = w[m].decay * acc[m] + dt * (w[m].left * g0[m] + w[m].right * g1[m]);
            std::swap(g0, g1);
        }
        FieldCurrentPoint& p = out[n];
        p.t = g.t(n);
        const auto row = f.mu.row(static_cast<Eigen::Index>(n));
        if (n > 0) {
            double s = 0.0;
            for (std::size_t k = 0; k < nu; ++k) s += 0.5 * integrated_pprime(p.t, g.u(k)) * f.psi[static_cast<Eigen::Index>(k)];
            p.rhs_initial = s * du;
            p.rhs_control = c * at_origin(acc);
        }
        p.rhs = p.rhs_initial + p.rhs_control;

        double lhs = 0.0, tail = 0.0, mq = 0.0, mh = 0.0;
        const std::size_t kq = o + nu / 8, kh = o + nu / 4;  // M = U/4 and U/2
        for (std::size_t k = o; k < nu; ++k) {
            const double d = row[static_cast<Eigen::Index>(k)] - f.psi[static_cast<Eigen::Index>(k)];
            const double wk = (k == o || k == nu - 1) ? 0.5 : 1.0;
            lhs += wk * d;
            if (g.u(k) > 0.9 * g.U) tail += std::abs(d);
            const double ud = g.u(k) * d;
            if (k <= kq) mq += (k == o || k == kq ? 0.5 : 1.0) * ud;
            if (k <= kh) mh += (k == o || k == kh ? 0.5 : 1.0) * ud;
        }
        p.lhs = lhs * du;
        p.tail = tail * du;
        p.residual = p.lhs - p.rhs;
        p.moment_quarter = mq * du / g.u(kq);
        p.moment_half = mh * du / g.u(kh);
        p.moment_decreasing = std::abs(p.moment_half) <= std::abs(p.moment_quarter) + 1e-12;
    }
    return out;
}

// Discrete L2 norm over space-time of dmu/dt + dJ/du with J = -1/2 dmu/du + chi dH/du,
// forward differences in t and centred differences in u.
inline double conservation_residual(const GridField& f) {
    const FieldGrid& g = f.grid;
    const double c = chi(f.rho), du = g.du(), dt = g.dt();
    const std::size_t nu = g.nu;
    std::vector<double> grad(nu), J(nu);
    double s = 0.0;
    for (std::size_t n = 0; n < g.nt; ++n) {
        const auto mu = f.mu.row(static_cast<Eigen::Index>(n));
        const auto next = f.mu.row(static_cast<Eigen::Index>(n + 1));
        detail::space_gradient(f.H.row(static_cast<Eigen::Index>(n)).data(), nu, du, grad.data());
        detail::space_gradient(mu.data(), nu, du, J.data());
        for (std::size_t k = 0; k < nu; ++k) J[k] = -0.5 * J[k] + c * grad[k];
        for (std::size_t k = 1; k + 1 < nu; ++k) {
            const auto ki = static_cast<Eigen::Index>(k);
            const double r = (next[ki] - mu[ki]) / dt + (J[k + 1] - J[k - 1]) / (2.0 * du);
            s += r * r;
        }
    }
    return std::sqrt(s * du * dt);
}

struct ConvergenceLadder {
    std::vector<double> dt;
    std::vector<double> du;
    std::vector<double> residual;
    double slope = 0.0;  // least-squares slope of log residual against log dt
};

// Refines dt and du together by factors of two and fits the observed order.
inline ConvergenceLadder conservation_ladder(const std::function<double(double)>& psi,
                                             const std::function<double(double, double)>& H, double T, double U,
                                             double rho, double dt0, double du0, int levels) {
    if (levels < 2) throw InvalidArgument("conservation_ladder: need at least two levels");
    ConvergenceLadder L;
    for (int l = 0; l < levels; ++l) {
        const double scale = std::ldexp(1.0, -l);
        const FieldGrid g = FieldGrid::with_steps(T, dt0 * scale, U, du0 * scale);
        L.dt.push_back(g.dt());
        L.du.push_back(g.du());
        L.residual.push_back(conservation_residual(make_grid_field(g, rho, psi, H)));
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = levels;
    for (int l = 0; l < levels; ++l) {
        const double x = std::log(L.dt[static_cast<std::size_t>(l)]), y = std::log(L.residual[static_cast<std::size_t>(l)]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    L.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    return L;
}

// max over t of the discrete L2 norm in u of dK/du - (psi - mu_t), centred
// differences at interior nodes.
inline double mu_k_residual(const GridField& f) {
    const FieldGrid& g = f.grid;
    const double du = g.du();
    double worst = 0.0;
    for (std::size_t n = 0; n <= g.nt; ++n) {
        const auto K = f.K.row(static_cast<Eigen::Index>(n));
        const auto mu = f.mu.row(static_cast<Eigen::Index>(n));
        double s = 0.0;
        for (std::size_t k = 1; k + 1 < g.nu; ++k) {
            const auto ki = static_cast<Eigen::Index>(k);
            const double r = (K[ki + 1] - K[ki - 1]) / (2.0 * du) - (f.psi[ki] - mu[ki]);
            s += r * r;
        }
        worst = std::max(worst, std::sqrt(s * du));
    }
    return worst;
}

struct TestFunction {
    std::function<double(double)> f, d1, d2, d3;

    static TestFunction gaussian(double centre, double width) {
        TestFunction r;
        const double w2 = width * width;
        auto g = [=](double u) { return std::exp(-(u - centre) * (u - centre) / (2.0 * w2)); };
        r.f = g;
        r.d1 = [=](double u) { return -(u - centre) / w2 * g(u); };
        r.d2 = [=](double u) {
            const double x = u - centre;
            return (x * x / (w2 * w2) - 1.0 / w2) * g(u);
        };
        r.d3 = [=](double u) {
            const double x = u - centre;
            return (3.0 * x / (w2 * w2) - x * x * x / (w2 * w2 * w2)) * g(u);
        };
        return r;
    }
};

struct RemarkBoundCheck {
    bool ok = true;
    double worst_ratio_level = 0.0;  // max |<mu_t,f>| / bound
    double worst_ratio_increment = 0.0;  // max |<mu_t,f> - <mu_s,f>| / bound
};

// The a-priori bounds
//   |<mu_t,f>| <= 2 sqrt(chi Q) (|f| + sqrt(T)|f'|)
//   |<mu_t,f> - <mu_s,f>| <= sqrt(2 chi Q) ((t-s)/2 |f''| + sqrt(t-s)|f'| + (t-s)/2 sqrt(T)|f'''|)
// for every grid time t and pair s <= t, norms in L2 on the grid.
inline RemarkBoundCheck check_remark_bounds(const GridField& field, double q_total, const TestFunction& tf) {
    const FieldGrid& g = field.grid;
    const double c = chi(field.rho), du = g.du();
    double n0 = 0, n1 = 0, n2 = 0, n3 = 0;
    Eigen::VectorXd fv(static_cast<Eigen::Index>(g.nu));
    for (std::size_t k = 0; k < g.nu; ++k) {
        const double u = g.u(k);
        fv[static_cast<Eigen::Index>(k)] = tf.f(u);
        n0 += tf.f(u) * tf.f(u);
        n1 += tf.d1(u) * tf.d1(u);
        n2 += tf.d2(u) * tf.d2(u);
        n3 += tf.d3(u) * tf.d3(u);
    }
    n0 = std::sqrt(n0 * du);
    n1 = std::sqrt(n1 * du);
    n2 = std::sqrt(n2 * du);
    n3 = std::sqrt(n3 * du);

    const Eigen::VectorXd pair = field.mu * fv * du;
    RemarkBoundCheck r;
    const double q = std::max(q_total, 0.0);
    const double level_bound = 2.0 * std::sqrt(c * q) * (n0 + std::sqrt(g.T) * n1);
    auto ratio = [](double lhs, double bound) {
        if (bound > 0.0) return lhs / bound;
        return lhs > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    };
    for (Eigen::Index n = 0; n < pair.size(); ++n)
        r.worst_ratio_level = std::max(r.worst_ratio_level, ratio(std::abs(pair[n]), level_bound));
    const double amp = std::sqrt(2.0 * q * c);
    for (std::size_t t = 0; t <= g.nt; ++t)
        for (std::size_t s = 0; s < t; ++s) {
            const double gap = g.t(t) - g.t(s);
            const double bound = amp * (0.5 * gap * n2 + std::sqrt(gap) * n1 + 0.5 * gap * std::sqrt(g.T) * n3);
            const double lhs = std::abs(pair[static_cast<Eigen::Index>(t)] - pair[static_cast<Eigen::Index>(s)]);
            r.worst_ratio_increment = std::max(r.worst_ratio_increment, ratio(lhs, bound));
        }
    r.ok = r.worst_ratio_level <= 1.0 && r.worst_ratio_increment <= 1.0;
    return r;
}

struct PprimeBound {
    bool ok = true;
    double constant = 0.0;  // smallest C that works on the sampled u values
    double worst_u = 0.0;
    std::vector<double> u;
    std::vector<double> integral;  // int_0^t p'_s(u) ds by quadrature
};

// Checks |int_0^t p'_s(u) ds| <= C min{ sqrt(t)/|u| e^{-u^2/2t}, 1 } with C = 1
// on log-spaced u in [1e-3 sqrt t, 30 sqrt t] plus any extra points supplied.
inline PprimeBound check_pprime_bound(double t, std::vector<double> extra_u = {}, std::size_t points = 200) {
    if (!(t > 0.0)) throw InvalidArgument("check_pprime_bound: t must be positive");
    PprimeBound r;
    const double rt = std::sqrt(t);
    for (std::size_t i = 0; i < points; ++i) {
        const double x = std::log(1e-3) + (std::log(30.0) - std::log(1e-3)) * static_cast<double>(i) / static_cast<double>(points - 1);
        r.u.push_back(rt * std::exp(x));
    }
    r.u.insert(r.u.end(), extra_u.begin(), extra_u.end());
    boost::math::quadrature::tanh_sinh<double> integ;
    for (double u : r.u) {
        double val = 0.0;
        if (u != 0.0) {
            auto f = [u](double s) {
                if (s <= 0.0) return 0.0;
                return -u / s * std::exp(-u * u / (2.0 * s)) / std::sqrt(2.0 * std::numbers::pi * s);
            };
            val = integ.integrate(f, 0.0, t, 1e-12);
        }
        r.integral.push_back(val);
        const double au = std::abs(u);
        const double bound = au == 0.0 ? 1.0 : std::min(rt / au * std::exp(-u * u / (2.0 * t)), 1.0);
        const double ratio = bound > 0.0 ? std::abs(val) / bound : (val == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
        if (ratio > r.constant) {
            r.constant = ratio;
            r.worst_u = u;
        }
    }
    r.ok = r.constant <= 1.0 + 1e-9;
    return r;
}

// Flat binary layout: 8-byte magic, uint64 nt, uint64 nu, double T, U, rho,
// then psi (nu values) and H, mu, K row-major ((nt+1) x nu each), all in host byte order.
inline constexpr char field_magic[8] = {'S', 'S', 'E', 'P', 'F', 'L', 'D', '1'};

inline void write_field_binary(std::ostream& os, const GridField& f) {
    auto put = [&](const void* p, std::size_t n) { os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); };
    const std::uint64_t nt = f.grid.nt, nu = f.grid.nu;
    put(field_magic, 8);
    put(&nt, 8);
    put(&nu, 8);
    put(&f.grid.T, 8);
    put(&f.grid.U, 8);
    put(&f.rho, 8);
    put(f.psi.data(), nu * 8);
    for (const FieldArray* a : {&f.H, &f.mu, &f.K}) put(a->data(), static_cast<std::size_t>(a->size()) * 8);
    if (!os) throw NumericalError("write_field_binary: stream error");
}

inline GridField read_field_binary(std::istream& is) {
    auto get = [&](void* p, std::size_t n) {
        is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (!is) throw InvalidArgument("read_field_binary: truncated input");
    };
    char magic[8];
    get(magic, 8);
    if (std::memcmp(magic, field_magic, 8) != 0) throw InvalidArgument("read_field_binary: bad magic");
    std::uint64_t nt = 0, nu = 0;
    GridField f;
    get(&nt, 8);
    get(&nu, 8);
    get(&f.grid.T, 8);
    get(&f.grid.U, 8);
    get(&f.rho, 8);
    f.grid.nt = nt;
    f.grid.nu = nu;
    f.grid.validate();
    f.psi.resize(static_cast<Eigen::Index>(nu));
    get(f.psi.data(), nu * 8);
    for (FieldArray* a : {&f.H, &f.mu, &f.K}) {
        a->resize(static_cast<Eigen::Index>(nt + 1), static_cast<Eigen::Index>(nu));
        get(a->data(), static_cast<std::size_t>(a->size()) * 8);
    }
    return f;
}

// CSV with one row per (t, u) grid point; refuses grids above max_rows.
inline void write_field_csv(std::ostream& os, const GridField& f, std::size_t max_rows = 1000000) {
    const std::size_t rows = (f.grid.nt + 1) * f.grid.nu;
    if (rows > max_rows) throw InvalidArgument("write_field_csv: grid too large for CSV, use the binary format");
    os << "t,u,mu,K,H\n";
    os.precision(17);
    for (std::size_t n = 0; n <= f.grid.nt; ++n)
        for (std::size_t k = 0; k < f.grid.nu; ++k) {
            const auto ni = static_cast<Eigen::Index>(n), ki = static_cast<Eigen::Index>(k);
            os << f.grid.t(n) << ',' << f.grid.u(k) << ',' << f.mu(ni, ki) << ',' << f.K(ni, ki) << ',' << f.H(ni, ki)
               << '\n';
        }
}

}  // namespace ssep
