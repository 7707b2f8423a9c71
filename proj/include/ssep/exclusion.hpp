#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ssep/errors.hpp"
#include "ssep/rng.hpp"

namespace ssep {

// Periodic ring of `size` sites. Lattice coordinate x in [-size/2, size/2)
// lives at window index x + origin_offset.
struct LatticeWindow {
    std::int64_t size = 0;
    std::int64_t origin_offset = 0;

    explicit LatticeWindow(std::int64_t L = 4) : size(L), origin_offset(L / 2) {
        if (L < 4) throw InvalidArgument("lattice size must be at least 4");
    }
    std::int64_t x_min() const { return -origin_offset; }
    std::int64_t x_max() const { return size - origin_offset - 1; }
    std::int64_t index(std::int64_t x) const {
        std::int64_t i = (x + origin_offset) % size;
        return i < 0 ? i + size : i;
    }
    std::int64_t coord(std::int64_t i) const { return i - origin_offset; }
};

struct SimOptions {
    // Track the stirring permutation and individual particle labels (O(L) memory).
    bool track_stirring = false;
    // Inclusive range of bond left-endpoints x whose currents J_{x,x+1} are
    // ledgered; empty means every bond of the ring.
    std::optional<std::pair<std::int64_t, std::int64_t>> tracked_bonds;
};

// Smallest admissible check: the ring half-length must exceed the diffusive
// reach 2*safety*sqrt(t_max) plus the observation window.
inline bool guard_ok(std::int64_t L, double t_max, std::int64_t window = 0, double safety = 10.0) {
    return static_cast<double>(L) / 2.0 > 2.0 * safety * std::sqrt(std::max(t_max, 0.0)) +
                                              static_cast<double>(window);
}

inline void check_guard(std::int64_t L, double t_max, std::int64_t window = 0,
                        double safety = 10.0) {
    if (!guard_ok(L, t_max, window, safety)) {
        throw GuardError("wrap-around guard violated: L=" + std::to_string(L) +
                         " is too small for t_max=" + std::to_string(t_max) +
                         " (window " + std::to_string(window) + ", safety " +
                         std::to_string(safety) + ")");
    }
}

class SimState {
public:
    // Builds a state from an explicit occupancy vector (window order).
    static SimState from_occupancy(std::vector<std::uint8_t> occ, double rho, std::uint64_t seed,
                                   std::optional<std::int64_t> tagged = std::nullopt,
                                   const SimOptions& opts = {}) {
        SimState s(LatticeWindow(static_cast<std::int64_t>(occ.size())), rho, seed, opts);
        for (auto v : occ)
            if (v > 1) throw InvalidArgument("occupancy values must be 0 or 1");
        s.occ_ = std::move(occ);
        s.finish_init(tagged);
        return s;
    }

    const LatticeWindow& window() const { return win_; }
    std::int64_t size() const { return win_.size; }
    double clock() const { return clock_; }
    double rho() const { return rho_; }
    std::uint64_t seed() const { return seed_; }

    int occupancy(std::int64_t x) const { return occ_[win_.index(x)]; }
    int initial_occupancy(std::int64_t x) const { return occ0_[win_.index(x)]; }
    const std::vector<std::uint8_t>& occupancy_vector() const { return occ_; }
    const std::vector<std::uint8_t>& initial_occupancy_vector() const { return occ0_; }

    std::int64_t particle_count() const {
        std::int64_t n = 0;
        for (auto v : occ_) n += v;
        return n;
    }

    bool has_tagged() const { return tagged_.has_value(); }
    // Unwrapped lattice coordinate of the tagged particle.
    std::int64_t tagged_pos() const {
        if (!tagged_) throw InvalidArgument("no tagged particle");
        return *tagged_;
    }

    bool is_tracked(std::int64_t x) const { return x >= bond_lo_ && x <= bond_hi_; }
    std::pair<std::int64_t, std::int64_t> tracked_bonds() const { return {bond_lo_, bond_hi_}; }
    // Net signed number of particle crossings of bond (x, x+1).
    std::int64_t current(std::int64_t x) const {
        if (!is_tracked(x)) throw InvalidArgument("bond " + std::to_string(x) + " is not ledgered");
        return ledger_[static_cast<std::size_t>(x - bond_lo_)];
    }

    bool stirring_tracked() const { return track_stirring_; }
    // Stirring map: window index of the site currently holding the content
    // that started at window index i.
    const std::vector<std::int32_t>& stirring_perm() const { return perm_; }
    const std::vector<std::int32_t>& stirring_inverse() const { return perm_inv_; }
    // Exclusion labels: unwrapped position of each particle, labelled in
    // increasing order of initial position.
    const std::vector<std::int64_t>& particle_positions() const { return particle_pos_; }

    // Fixture helpers used by negative-control tests.
    void set_current(std::int64_t x, std::int64_t value) {
        if (!is_tracked(x)) throw InvalidArgument("bond is not ledgered");
        ledger_[static_cast<std::size_t>(x - bond_lo_)] = value;
    }
    void set_tagged_pos(std::int64_t x) { tagged_ = x; }
    void set_occupancy(std::int64_t x, int v) { occ_[win_.index(x)] = static_cast<std::uint8_t>(v); }

    // Runs the jump chain up to time t (t >= clock). The next event time is
    // part of the state, so advancing in several steps reproduces one step.
    void advance_to(double t) {
        if (!(t >= clock_)) throw InvalidArgument("advance_to: target time precedes the clock");
        const auto L = static_cast<std::uint64_t>(win_.size);
        const double total_rate = 0.5 * static_cast<double>(L);
        std::uint8_t* occ = occ_.data();
        while (next_event_ <= t) {
            const auto i = static_cast<std::int64_t>(rng_.bounded(L));
            const std::int64_t j = (i + 1 == win_.size) ? 0 : i + 1;
            const std::uint8_t a = occ[i];
            const std::uint8_t b = occ[j];
            if (a != b) {
                occ[i] = b;
                occ[j] = a;
                const std::int64_t x = win_.coord(i);
                const std::int64_t delta = a ? 1 : -1;
                if (x >= bond_lo_ && x <= bond_hi_) ledger_[static_cast<std::size_t>(x - bond_lo_)] += delta;
                if (tagged_) {
                    const std::int64_t ti = win_.index(*tagged_);
                    if (a && ti == i) *tagged_ += 1;
                    else if (b && ti == j) *tagged_ -= 1;
                }
                if (track_stirring_) move_label(i, j, a != 0);
            }
            if (track_stirring_) {
                std::swap(perm_inv_[i], perm_inv_[j]);
                perm_[perm_inv_[i]] = static_cast<std::int32_t>(i);
                perm_[perm_inv_[j]] = static_cast<std::int32_t>(j);
            }
            next_event_ += rng_.exponential(total_rate);
        }
        clock_ = t;
    }

private:
    SimState(LatticeWindow w, double rho, std::uint64_t seed, const SimOptions& opts)
        : win_(w), rho_(rho), seed_(seed), rng_(seed), track_stirring_(opts.track_stirring) {
        if (!(rho > 0.0 && rho < 1.0)) throw InvalidArgument("density must lie in (0,1)");
        if (opts.tracked_bonds) {
            bond_lo_ = opts.tracked_bonds->first;
            bond_hi_ = opts.tracked_bonds->second;
            if (bond_lo_ > bond_hi_ || bond_lo_ < win_.x_min() || bond_hi_ > win_.x_max())
                throw InvalidArgument("tracked bond range outside the ring");
        } else {
            bond_lo_ = win_.x_min();
            bond_hi_ = win_.x_max();
        }
    }

    void finish_init(std::optional<std::int64_t> tagged) {
        tagged_ = tagged;
        if (tagged_ && occ_[win_.index(*tagged_)] != 1)
            throw InvalidArgument("tagged particle must sit on an occupied site");
        occ0_ = occ_;
        ledger_.assign(static_cast<std::size_t>(bond_hi_ - bond_lo_ + 1), 0);
        if (track_stirring_) {
            const auto L = static_cast<std::size_t>(win_.size);
            perm_.resize(L);
            perm_inv_.resize(L);
            site_label_.assign(L, -1);
            particle_pos_.clear();
            for (std::size_t i = 0; i < L; ++i) {
                perm_[i] = perm_inv_[i] = static_cast<std::int32_t>(i);
                if (occ_[i]) {
                    site_label_[i] = static_cast<std::int32_t>(particle_pos_.size());
                    particle_pos_.push_back(win_.coord(static_cast<std::int64_t>(i)));
                }
            }
        }
        next_event_ = rng_.exponential(0.5 * static_cast<double>(win_.size));
    }

    void move_label(std::int64_t i, std::int64_t j, bool rightward) {
        if (rightward) {
            const std::int32_t lab = site_label_[i];
            site_label_[j] = lab;
            site_label_[i] = -1;
            particle_pos_[lab] += 1;
        } else {
            const std::int32_t lab = site_label_[j];
            site_label_[i] = lab;
            site_label_[j] = -1;
            particle_pos_[lab] -= 1;
        }
    }

    friend SimState init_bernoulli(double, std::int64_t, std::uint64_t, const SimOptions&);
    friend SimState init_conditioned(double, std::int64_t, std::uint64_t, const SimOptions&);

    LatticeWindow win_;
    double rho_;
    std::uint64_t seed_;
    Xoshiro256 rng_;
    bool track_stirring_;
    std::vector<std::uint8_t> occ_;
    std::vector<std::uint8_t> occ0_;
    std::optional<std::int64_t> tagged_;
    std::int64_t bond_lo_ = 0;
    std::int64_t bond_hi_ = 0;
    std::vector<std::int64_t> ledger_;
    std::vector<std::int32_t> perm_;
    std::vector<std::int32_t> perm_inv_;
    std::vector<std::int32_t> site_label_;
    std::vector<std::int64_t> particle_pos_;
    double clock_ = 0.0;
    double next_event_ = 0.0;
};

// Product Bernoulli(rho) occupancy, no tagged particle.
inline SimState init_bernoulli(double rho, std::int64_t L, std::uint64_t seed,
                               const SimOptions& opts = {}) {
    SimState s(LatticeWindow(L), rho, seed, opts);
    s.occ_.resize(static_cast<std::size_t>(L));
    for (auto& v : s.occ_) v = s.rng_.bernoulli(rho) ? 1 : 0;
    s.finish_init(std::nullopt);
    return s;
}

// Same draw as init_bernoulli with the origin forced occupied and tagged.
// Sharing the random stream couples the two initial laws site by site.
inline SimState init_conditioned(double rho, std::int64_t L, std::uint64_t seed,
                                 const SimOptions& opts = {}) {
    SimState s(LatticeWindow(L), rho, seed, opts);
    s.occ_.resize(static_cast<std::size_t>(L));
    for (auto& v : s.occ_) v = s.rng_.bernoulli(rho) ? 1 : 0;
    s.occ_[s.win_.index(0)] = 1;
    s.finish_init(std::int64_t{0});
    return s;
}

inline SimState advance_to(SimState state, double t) {
    state.advance_to(t);
    return state;
}

struct PathSample {
    std::vector<double> times;
    std::vector<std::int64_t> X;
    std::vector<std::int64_t> J;
    std::uint64_t seed = 0;

    friend bool operator==(const PathSample&, const PathSample&) = default;
};

inline void check_grid(const std::vector<double>& grid) {
    if (grid.empty()) throw InvalidArgument("time grid is empty");
    if (grid.front() < 0.0) throw InvalidArgument("time grid must be nonnegative");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1])) throw InvalidArgument("time grid must be strictly increasing");
}

// One trajectory observed at the grid times: the tagged displacement X (0
// when untagged) and the current J_{-1,0} across the bond left of the origin.
inline PathSample sample_path(double rho, std::int64_t L, const std::vector<double>& grid,
                              std::uint64_t seed, bool tagged, double safety = 10.0) {
    check_grid(grid);
    check_guard(L, grid.back(), 0, safety);
    SimOptions opts;
    opts.tracked_bonds = std::make_pair(std::int64_t{-1}, std::int64_t{-1});
    SimState s = tagged ? init_conditioned(rho, L, seed, opts) : init_bernoulli(rho, L, seed, opts);
    PathSample p;
    p.seed = seed;
    p.times = grid;
    p.X.reserve(grid.size());
    p.J.reserve(grid.size());
    for (double t : grid) {
        s.advance_to(t);
        p.X.push_back(tagged ? s.tagged_pos() : 0);
        p.J.push_back(s.current(-1));
    }
    return p;
}

// Discrete continuity equation J_{x-1,x} - J_{x,x+1} = eta_t(x) - eta_0(x)
// at every x of [x_lo, x_hi].
inline bool check_conservation(const SimState& s, std::int64_t x_lo, std::int64_t x_hi) {
    const auto& w = s.window();
    if (x_lo > x_hi || x_lo - 1 < w.x_min() || x_hi >= w.x_max())
        throw InvalidArgument("conservation window must lie strictly inside the ring");
    for (std::int64_t x = x_lo; x <= x_hi; ++x) {
        const std::int64_t lhs = s.current(x - 1) - s.current(x);
        const std::int64_t rhs = s.occupancy(x) - s.initial_occupancy(x);
        if (lhs != rhs) return false;
    }
    return true;
}

// Order preservation: the current through the bond left of the origin
// counts the particles between the origin and the tagged particle.
inline bool check_current_tagged_identity(const SimState& s) {
    const std::int64_t X = s.tagged_pos();
    const std::int64_t J = s.current(-1);
    const auto& w = s.window();
    if (X <= w.x_min() || X > w.x_max()) throw InvalidArgument("tagged particle left the window");
    if (J >= 0) {
        std::int64_t sum = 0;
        for (std::int64_t x = 0; x <= X - 1; ++x) sum += s.occupancy(x);
        return J == sum;
    }
    std::int64_t sum = 0;
    for (std::int64_t x = X; x <= -1; ++x) sum += s.occupancy(x);
    return J == -sum;
}

// Tent function G_n(u) = (1 - u/n)^+ on u >= 0, zero for u < 0.
inline double tent_G(int n, double u) {
    if (u < 0.0) return 0.0;
    return std::max(0.0, 1.0 - u / n);
}

// Residual of the decomposition of the rescaled current J_{-1,0}/a_N into the
// change of the empirical measure tested against G_n plus the averaged
// current over the tent's support.
inline double check_Gn_decomposition(const SimState& s, int n, int N, double a_N) {
    if (n < 1 || N < 1 || !(a_N > 0.0)) throw InvalidArgument("n, N and a_N must be positive");
    const std::int64_t nN = static_cast<std::int64_t>(n) * N;
    if (nN > s.window().x_max() - 1) throw InvalidArgument("tent support exceeds the window");
    const double rho = s.rho();
    double mu_t = 0.0;
    double mu_0 = 0.0;
    for (std::int64_t x = 0; x < nN; ++x) {
        const double g = tent_G(n, static_cast<double>(x) / N);
        mu_t += (s.occupancy(x) - rho) * g;
        mu_0 += (s.initial_occupancy(x) - rho) * g;
    }
    mu_t /= a_N;
    mu_0 /= a_N;
    double jsum = 0.0;
    for (std::int64_t x = 0; x < nN; ++x) jsum += static_cast<double>(s.current(x));
    return static_cast<double>(s.current(-1)) / a_N - (mu_t - mu_0) -
           jsum / (static_cast<double>(nN) * a_N);
}

// Pushforward check: each site's content equals the initial content of the
// site mapped onto it by the stirring permutation.
inline bool check_stirring_pushforward(const SimState& s) {
    if (!s.stirring_tracked()) throw InvalidArgument("stirring is not tracked");
    const auto& perm = s.stirring_perm();
    const auto& occ = s.occupancy_vector();
    const auto& occ0 = s.initial_occupancy_vector();
    std::vector<std::uint8_t> seen(perm.size(), 0);
    for (std::size_t i = 0; i < perm.size(); ++i) {
        const auto p = static_cast<std::size_t>(perm[i]);
        if (p >= perm.size() || seen[p]) return false;
        seen[p] = 1;
        if (occ[p] != occ0[i]) return false;
    }
    return true;
}

}  // namespace ssep
