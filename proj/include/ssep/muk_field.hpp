#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "ssep/errors.hpp"
#include "ssep/rate.hpp"

namespace ssep {

// A path in (mu0, K) coordinates on a staggered, possibly nonuniform grid.
// K(t,u) lives on nodes (rows = times, cols = space nodes); mu0 lives on the
// cell centres between consecutive space nodes, which is where the forward
// difference of K is naturally located.
struct MuKField {
    std::vector<double> t;
    std::vector<double> u;
    Eigen::VectorXd mu0;
    Eigen::MatrixXd K;

    std::size_t cells() const { return u.size() - 1; }

    void validate(double zero_tol = 1e-12) const {
        if (t.size() < 2 || u.size() < 3) throw InvalidArgument("MuKField: grid too small");
        if (t.front() != 0.0) throw InvalidArgument("MuKField: time grid must start at 0");
        for (std::size_t i = 1; i < t.size(); ++i)
            if (!(t[i] > t[i - 1])) throw InvalidArgument("MuKField: time grid must increase");
        for (std::size_t i = 1; i < u.size(); ++i)
            if (!(u[i] > u[i - 1])) throw InvalidArgument("MuKField: space grid must increase");
        if (K.rows() != static_cast<Eigen::Index>(t.size()) || K.cols() != static_cast<Eigen::Index>(u.size()))
            throw InvalidArgument("MuKField: K has wrong shape");
        if (mu0.size() != static_cast<Eigen::Index>(cells())) throw InvalidArgument("MuKField: mu0 has wrong size");
        const double scale = std::max(1.0, K.cwiseAbs().maxCoeff());
        if (K.row(0).cwiseAbs().maxCoeff() > zero_tol * scale)
            throw InvalidArgument("MuKField: K(0, .) must vanish");
    }
};

inline MuKField zero_muk_field(std::vector<double> t, std::vector<double> u) {
    MuKField f;
    f.t = std::move(t);
    f.u = std::move(u);
    f.mu0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(f.u.size() - 1));
    f.K = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(f.t.size()), static_cast<Eigen::Index>(f.u.size()));
    return f;
}

// Symmetric bilinear form whose diagonal is chi * Q_T:
//   1/2 int int dK1/dt dK2/dt + 1/8 int int (d mu1/du)(d mu2/du)
//   + 1/4 int dK1/du(T) dK2/du(T) + 1/2 int [mu0_1 mu0_2 - (mu0_1 dK2/du(T) + mu0_2 dK1/du(T))/2]
// with mu = mu0 - dK/du. Time derivatives are forward differences, dK/du is
// the forward difference at cell centres, and d mu/du is the difference of
// neighbouring centres located at interior nodes.
inline double lambda_form(const MuKField& a, const MuKField& b) {
    a.validate();
    b.validate();
    if (a.t != b.t || a.u != b.u) throw InvalidArgument("lambda_form: fields live on different grids");
    const auto nt = static_cast<Eigen::Index>(a.t.size());
    const auto nu = static_cast<Eigen::Index>(a.u.size());
    const Eigen::Index nc = nu - 1;

    Eigen::VectorXd hc(nc), node_w = Eigen::VectorXd::Zero(nu), hn(nc - 1);
    for (Eigen::Index i = 0; i < nc; ++i) {
        hc[i] = a.u[i + 1] - a.u[i];
        node_w[i] += 0.5 * hc[i];
        node_w[i + 1] += 0.5 * hc[i];
    }
    for (Eigen::Index i = 0; i + 1 < nc; ++i) hn[i] = 0.5 * (hc[i] + hc[i + 1]);

    auto centre_slope = [&](const MuKField& f, Eigen::Index row) {
        Eigen::VectorXd d(nc);
        for (Eigen::Index i = 0; i < nc; ++i) d[i] = (f.K(row, i + 1) - f.K(row, i)) / hc[i];
        return d;
    };
    auto mu_gradient = [&](const MuKField& f, Eigen::Index row) {
        const Eigen::VectorXd mu = f.mu0 - centre_slope(f, row);
        Eigen::VectorXd g(nc - 1);
        for (Eigen::Index i = 0; i + 1 < nc; ++i) g[i] = (mu[i + 1] - mu[i]) / hn[i];
        return g;
    };

    double dyn = 0.0;
    for (Eigen::Index n = 0; n + 1 < nt; ++n) {
        const double dt = a.t[n + 1] - a.t[n];
        const Eigen::VectorXd da = a.K.row(n + 1) - a.K.row(n);
        const Eigen::VectorXd db = b.K.row(n + 1) - b.K.row(n);
        dyn += 0.5 * (node_w.array() * da.array() * db.array()).sum() / dt;
    }

    double diffusive = 0.0;
    for (Eigen::Index n = 0; n < nt; ++n) {
        double w = 0.0;
        if (n > 0) w += 0.5 * (a.t[n] - a.t[n - 1]);
        if (n + 1 < nt) w += 0.5 * (a.t[n + 1] - a.t[n]);
        const Eigen::VectorXd ga = mu_gradient(a, n);
        const Eigen::VectorXd gb = mu_gradient(b, n);
        diffusive += 0.125 * w * (hn.array() * ga.array() * gb.array()).sum();
    }

    const Eigen::VectorXd sa = centre_slope(a, nt - 1);
    const Eigen::VectorXd sb = centre_slope(b, nt - 1);
    const double final_slope = 0.25 * (hc.array() * sa.array() * sb.array()).sum();
    const double initial =
        0.5 * (hc.array() * (a.mu0.array() * b.mu0.array() -
                             0.5 * (a.mu0.array() * sb.array() + b.mu0.array() * sa.array())))
                  .sum();
    return dyn + diffusive + final_slope + initial;
}

// Q_T of a (mu0, K) path.
inline double q_total_muK(const MuKField& f, double rho) { return lambda_form(f, f) / chi(rho); }

}  // namespace ssep
