#pragma once

#include <cmath>
#include <limits>

#include "ssep/errors.hpp"

namespace ssep {

namespace detail {

inline bool is_nonpositive_integer(double x) { return x <= 0.0 && x == std::nearbyint(x); }
inline bool is_integer(double x) { return x == std::nearbyint(x); }

// 1/Gamma(x), zero at the poles.
inline double rgamma(double x) {
    if (is_nonpositive_integer(x)) return 0.0;
    return 1.0 / std::tgamma(x);
}

constexpr long kMaxTerms = 1000000;

// Direct power series; convergent for |z| < 1.
inline double hyp2f1_series(double a, double b, double c, double z) {
    double term = 1.0;
    double sum = 1.0;
    for (long k = 0; k < kMaxTerms; ++k) {
        const double kd = static_cast<double>(k);
        term *= (a + kd) * (b + kd) / ((c + kd) * (kd + 1.0)) * z;
        sum += term;
        if (term == 0.0) return sum;
        if (std::abs(term) <= 1e-17 * std::abs(sum) && k > 2) return sum;
    }
    throw NumericalError("hyp2f1: series did not converge within 10^6 terms");
}

}  // namespace detail

// Gauss hypergeometric function 2F1(a,b;c;z) for real z <= 1 with fixed
// parameters; the Gamma-function weights of the connection formulas are
// computed once at construction.
//
// |z| <= 1/2 sums the series directly. Negative arguments use the Pfaff
// transform z -> z/(z-1) on [-2,-1/2) and the 1/(1-z) connection formula
// further out, where the Pfaff image crowds towards 1. 1/2 < z < 1 uses the
// 1-z connection formula and z = 1 the Gauss sum.
class Hyp2F1 {
public:
    Hyp2F1(double a, double b, double c) : a_(a), b_(b), c_(c) {
        using detail::rgamma;
        if (detail::is_nonpositive_integer(c)) throw InvalidArgument("hyp2f1: c is a nonpositive integer");
        polynomial_ = detail::is_nonpositive_integer(a) || detail::is_nonpositive_integer(b);
        const double gc = std::tgamma(c);
        use_inverse_ = !detail::is_integer(b - a);
        if (use_inverse_) {
            w1_ = gc * std::tgamma(b - a) * rgamma(b) * rgamma(c - a);
            w2_ = gc * std::tgamma(a - b) * rgamma(a) * rgamma(c - b);
        }
        s_ = c - a - b;
        use_reflection_ = !detail::is_integer(s_);
        if (use_reflection_) {
            r1_ = gc * std::tgamma(s_) * rgamma(c - a) * rgamma(c - b);
            r2_ = gc * std::tgamma(-s_) * rgamma(a) * rgamma(b);
        }
        if (s_ > 0.0) gauss_sum_ = gc * std::tgamma(s_) * rgamma(c - a) * rgamma(c - b);
    }

    double operator()(double z) const {
        using detail::hyp2f1_series;
        const double a = a_, b = b_, c = c_;
        if (std::isnan(z) || z > 1.0) throw InvalidArgument("hyp2f1: argument must satisfy z <= 1");
        if (z == 0.0 || a == 0.0 || b == 0.0) return 1.0;
        if (z == 1.0) {
            if (!(s_ > 0.0)) throw InvalidArgument("hyp2f1: divergent at z=1 when c-a-b <= 0");
            return gauss_sum_;
        }
        if (std::abs(z) <= 0.5 || polynomial_) return hyp2f1_series(a, b, c, z);
        if (z < -2.0 && use_inverse_) {
            const double w = 1.0 / (1.0 - z);
            return w1_ * std::pow(w, a) * hyp2f1_series(a, c - b, a - b + 1.0, w) +
                   w2_ * std::pow(w, b) * hyp2f1_series(b, c - a, b - a + 1.0, w);
        }
        if (z < 0.0) return std::pow(1.0 - z, -a) * hyp2f1_series(a, c - b, c, z / (z - 1.0));
        if (!use_reflection_) return hyp2f1_series(a, b, c, z);
        const double y = 1.0 - z;
        return r1_ * hyp2f1_series(a, b, 1.0 - s_, y) +
               r2_ * std::pow(y, s_) * hyp2f1_series(c - a, c - b, 1.0 + s_, y);
    }

private:
    double a_, b_, c_, s_;
    bool polynomial_ = false;
    bool use_inverse_ = false;
    bool use_reflection_ = false;
    double w1_ = 0.0, w2_ = 0.0, r1_ = 0.0, r2_ = 0.0;
    double gauss_sum_ = std::numeric_limits<double>::quiet_NaN();
};

inline double hyp2f1(double a, double b, double c, double z) { return Hyp2F1(a, b, c)(z); }

}  // namespace ssep
