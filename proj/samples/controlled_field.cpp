// Push a density bump to the right with a control whose gradient is a
// Gaussian, then read off the initial and dynamic costs and the mass moved
// across the origin.
#include <cmath>
#include <cstdio>

#include "ssep/hydro.hpp"

int main() {
    const double rho = 0.4;
    const auto grid = ssep::FieldGrid::defaults(1.0);
    const auto field = ssep::make_grid_field(
        grid, rho, [](double u) { return 0.5 * std::exp(-u * u); },
        [](double t, double u) { return 0.3 * t * std::erf(u); });

    std::printf("grid: %zu times x %zu nodes, du=%.3g dt=%.3g\n", grid.nt + 1, grid.nu, grid.du(), grid.dt());
    std::printf("initial cost q_zero = %.6f, dynamic cost q_dyn = %.6f\n", ssep::q_zero(field), ssep::q_dyn(field));
    std::printf("same rate from the (mu0, K) form: %.6f\n", ssep::q_total_muK(ssep::to_muk(field), rho));

    const auto current = ssep::field_current(field);
    for (std::size_t n = 0; n < current.size(); n += current.size() / 4)
        std::printf("t=%.2f  mass moved to u > 0: %.6f  (identity residual %.1e)\n", current[n].t, current[n].lhs,
                    current[n].residual);
}
