// The cheapest current profile forcing K(1,0) = 1 and K(4,0) = 1, and its
// rate computed in Fourier space, in real space and in closed form.
#include <cmath>
#include <cstdio>

#include "ssep/variational.hpp"

int main() {
    const double rho = 0.5, T = 5.0;
    const ssep::Minimizer m({1.0, 4.0}, {1.0, 1.0}, T);
    const double chi = ssep::chi(rho);

    std::printf("current through the origin, K(s, 0):\n");
    for (double s : {0.5, 1.0, 2.0, 3.0, 4.0, 5.0}) std::printf("  s=%.1f  %.6f\n", s, m.current_at_origin(s));

    std::printf("density at s=1 near the origin, mu(1, u):\n");
    for (double u : {-1.0, -0.25, 0.25, 1.0}) std::printf("  u=%+.2f  %.6f\n", u, m.mu(1.0, u));

    const double parseval = ssep::parseval_Q(ssep::fourier_field(m), rho, ssep::XiGrid::for_min_time(1.0));
    const double real_space = ssep::q_total_muK(ssep::minimizer_muk_field(m), rho);
    const double closed = m.closed_form_chi_q() / chi;
    std::printf("Q: parseval %.6f  real space %.6f  closed form %.6f\n", parseval, real_space, closed);
}
