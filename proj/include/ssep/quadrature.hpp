#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

#include "ssep/errors.hpp"

namespace ssep {

// Gauss-Legendre rule mapped to [0,1].
struct UnitRule {
    std::vector<double> x;
    std::vector<double> w;
};

template <unsigned N>
const UnitRule& gauss_legendre_unit() {
    static const UnitRule rule = [] {
        using G = boost::math::quadrature::gauss<double, N>;
        const auto& abs = G::abscissa();
        const auto& wts = G::weights();
        UnitRule r;
        for (std::size_t k = 0; k < abs.size(); ++k) {
            if (abs[k] == 0.0) {
                r.x.push_back(0.5);
                r.w.push_back(0.5 * wts[k]);
            } else {
                r.x.push_back(0.5 * (1.0 - abs[k]));
                r.w.push_back(0.5 * wts[k]);
                r.x.push_back(0.5 * (1.0 + abs[k]));
                r.w.push_back(0.5 * wts[k]);
            }
        }
        return r;
    }();
    return rule;
}

template <unsigned N, class F>
double gauss_legendre(F&& f, double a, double b) {
    const auto& r = gauss_legendre_unit<N>();
    double s = 0.0;
    for (std::size_t k = 0; k < r.x.size(); ++k) s += r.w[k] * f(a + (b - a) * r.x[k]);
    return s * (b - a);
}

// Points from `a` outward by steps growing geometrically from hmin by
// `ratio` and capped at hmax, stopping at or beyond `length`. The last step
// is trimmed so the final point is exactly a + length.
inline std::vector<double> graded_offsets(double length, double hmin, double hmax, double ratio) {
    if (!(length > 0.0) || !(hmin > 0.0) || !(hmax >= hmin) || !(ratio >= 1.0))
        throw InvalidArgument("graded_offsets: invalid grading parameters");
    std::vector<double> x{0.0};
    double h = hmin;
    while (x.back() + h < length * (1.0 - 1e-12)) {
        x.push_back(x.back() + h);
        h = std::min(h * ratio, hmax);
    }
    if (x.size() > 1 && length - x.back() < 0.5 * (x.back() - x[x.size() - 2])) x.back() = length;
    else x.push_back(length);
    return x;
}

// Grid on [0, T] containing every breakpoint, with each segment between
// consecutive breakpoints graded geometrically from both of its ends.
inline std::vector<double> graded_time_grid(double T, std::vector<double> breakpoints, double hmin,
                                            double hmax, double ratio) {
    breakpoints.push_back(0.0);
    breakpoints.push_back(T);
    std::sort(breakpoints.begin(), breakpoints.end());
    breakpoints.erase(std::unique(breakpoints.begin(), breakpoints.end()), breakpoints.end());
    std::vector<double> out{breakpoints.front()};
    for (std::size_t k = 0; k + 1 < breakpoints.size(); ++k) {
        const double a = breakpoints[k];
        const double b = breakpoints[k + 1];
        const double half = 0.5 * (b - a);
        const auto side = graded_offsets(half, std::min(hmin, half), std::max(hmax, std::min(hmin, half)), ratio);
        for (std::size_t i = 1; i < side.size(); ++i) out.push_back(a + side[i]);
        for (std::size_t i = side.size() - 1; i-- > 0;) out.push_back(b - side[i]);
        out.back() = b;
    }
    return out;
}

// Symmetric grid on [-U, U] with a node at 0, graded geometrically away from 0.
inline std::vector<double> graded_symmetric_grid(double U, double hmin, double hmax, double ratio) {
    const auto half = graded_offsets(U, hmin, hmax, ratio);
    std::vector<double> out;
    out.reserve(2 * half.size() - 1);
    for (std::size_t i = half.size(); i-- > 1;) out.push_back(-half[i]);
    for (double v : half) out.push_back(v);
    return out;
}

inline std::vector<double> uniform_grid(double a, double b, std::size_t intervals) {
    if (intervals == 0) throw InvalidArgument("uniform_grid: need at least one interval");
    std::vector<double> g(intervals + 1);
    for (std::size_t i = 0; i <= intervals; ++i)
        g[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(intervals);
    g.back() = b;
    return g;
}

}  // namespace ssep
