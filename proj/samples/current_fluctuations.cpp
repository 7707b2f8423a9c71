// Variance of the integrated current and the tagged displacement at a few
// times, next to the fractional Brownian motion prediction.
#include <cmath>
#include <cstdio>

#include "ssep/probe.hpp"

int main() {
    ssep::ProbeConfig cfg;
    cfg.rho = 0.5;
    cfg.L = 1024;
    cfg.grid = {25.0, 100.0, 400.0};
    cfg.replicas = 400;
    cfg.master_seed = 2024;

    for (auto obs : {ssep::Observable::current, ssep::Observable::tagged}) {
        const auto s = ssep::run_probe(cfg, obs);
        const double sigma2 = ssep::observable_sigma2(obs, cfg.rho);
        std::printf("%s\n", ssep::to_string(obs));
        for (std::size_t k = 0; k < s.times.size(); ++k) {
            const auto i = static_cast<Eigen::Index>(k);
            std::printf("  t=%6.0f  var=%8.3f +- %6.3f   predicted %8.3f\n", s.times[k], s.variance[i],
                        s.variance_se[i], sigma2 * std::sqrt(s.times[k]));
        }
        const auto cmp = ssep::compare_fbm(s, sigma2);
        std::printf("  covariance vs fBM: max |z| = %.2f (%s)\n", cmp.max_abs_z, cmp.pass ? "consistent" : "inconsistent");
    }
}
