#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "levysnake/grid_path.hpp"
#include "levysnake/mechanism.hpp"
#include "levysnake/rng.hpp"

namespace levysnake {

// Spectrally positive psi-Levy path on a uniform grid. Increments per step:
// Gaussian part with variance 2*beta*dt, drift -alpha*dt, and the jump part
// of pi. Atom jumps are exact compound Poisson with their compensating
// drift; stable jumps below eps_jump = dt^{1/theta}/10 are replaced by the
// compensated Gaussian approximation.
inline GridPath simulate_levy_path(const BranchingMechanism& mech, double T,
                                   double dt, std::uint64_t seed) {
    if (!(T > 0.0) || !(dt > 0.0))
        throw ConfigError("simulate_levy_path: T and dt must be > 0");
    MechanismReport rep = validate(mech);
    if (!rep.params_valid) throw ConfigError("invalid mechanism: " + rep.detail);

    std::size_t n = static_cast<std::size_t>(std::llround(T / dt));
    GridPath path;
    path.dt = dt;
    path.seed = seed;
    path.values.reserve(n + 1);

    Rng rng(seed);
    double drift = -mech.alpha * dt;
    double sigma = std::sqrt(2.0 * mech.beta * dt);

    double jump_rate = 0.0;          // total rate of explicit jumps
    double jump_compensation = 0.0;  // drift compensating explicit jumps
    double eps_jump = 0.0;
    if (mech.has_atoms()) {
        for (const auto& [x, m] : mech.atoms().atoms) {
            jump_rate += m;
            jump_compensation -= m * x;
        }
    } else if (mech.has_stable()) {
        const auto& s = mech.stable();
        double k = stable_density_const(s);
        eps_jump = std::pow(dt, 1.0 / s.theta) / 10.0;
        jump_rate = k * std::pow(eps_jump, -s.theta) / s.theta;
        jump_compensation = -k * std::pow(eps_jump, 1.0 - s.theta) / (s.theta - 1.0);
        // small jumps: compensated Gaussian substitution
        double small_var = k * std::pow(eps_jump, 2.0 - s.theta) / (2.0 - s.theta);
        sigma = std::sqrt(sigma * sigma + small_var * dt);
    }
    drift += jump_compensation * dt;

    auto sample_jump_size = [&](Rng& r) -> double {
        if (mech.has_atoms()) {
            // pick an atom proportionally to its mass
            double u = r.uniform() * jump_rate;
            for (const auto& [x, m] : mech.atoms().atoms) {
                if (u < m) return x;
                u -= m;
            }
            return mech.atoms().atoms.back().first;
        }
        const auto& s = mech.stable();
        // Pareto(theta) above eps_jump
        return eps_jump * std::pow(1.0 - r.uniform(), -1.0 / s.theta);
    };

    double x = 0.0;
    path.values.push_back(x);
    for (std::size_t i = 1; i <= n; ++i) {
        double inc = drift;
        if (sigma > 0.0) inc += sigma * rng.normal();
        if (jump_rate > 0.0) {
            int k = rng.poisson(jump_rate * dt);
            for (int j = 0; j < k; ++j) {
                double size = sample_jump_size(rng);
                inc += size;
                path.jumps.emplace_back(i, size);
            }
        }
        x += inc;
        path.values.push_back(x);
    }
    return path;
}

// Maximal grid intervals where X - I > 0. An interval [a,b] has X - I = 0 at
// both endpoints and > 0 strictly inside; the mark is -I at the left
// endpoint. An excursion still open at the horizon is discarded and counted
// in the diagnostics.
struct ExcursionInterval {
    std::size_t a_index = 0;
    std::size_t b_index = 0;
    double local_time_mark = 0.0;
};

struct ExcursionScan {
    std::vector<ExcursionInterval> intervals;
    bool open_at_end = false;  // one excursion discarded at the horizon
};

inline ExcursionScan excursions_above_infimum(const GridPath& path) {
    ExcursionScan scan;
    if (path.values.empty()) return scan;
    double inf = path.values.front();
    std::optional<std::size_t> open;
    double open_mark = 0.0;
    for (std::size_t i = 0; i < path.values.size(); ++i) {
        double x = path.values[i];
        if (x < inf) inf = x;
        if (x - inf > 0.0) {
            if (!open) {
                open = i - 1;  // previous index had X == I
                open_mark = -inf;
            }
        } else if (open) {
            scan.intervals.push_back({*open, i, open_mark});
            open.reset();
        }
    }
    scan.open_at_end = open.has_value();
    return scan;
}

struct RetryExhausted : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// First completed excursion above the infimum with duration > min_duration,
// shifted to start at 0: a sample from N(. | sigma > min_duration). The final
// grid value is clamped to 0 (grid overshoot of the continuum zero). Jump
// annotations are re-indexed into the excursion. Also reports the amount of
// local time (-I) consumed before acceptance, whose mean is 1/N(sigma>delta).
struct ExcursionSample {
    GridPath path;
    double local_time_consumed = 0.0;
    double sup = 0.0;
    std::size_t discarded_over_cap = 0;
};

inline ExcursionSample sample_excursion(const BranchingMechanism& mech,
                                        double min_duration, double dt,
                                        std::uint64_t seed,
                                        std::size_t max_steps = 200'000'000,
                                        double max_duration = 0.0) {
    if (!(min_duration > dt))
        throw ConfigError("sample_excursion: min_duration must exceed dt");
    MechanismReport rep = validate(mech);
    if (!rep.params_valid) throw ConfigError("invalid mechanism: " + rep.detail);

    std::size_t min_steps = static_cast<std::size_t>(std::llround(min_duration / dt));
    std::size_t cap_steps = max_duration > 0.0
                                ? static_cast<std::size_t>(std::llround(max_duration / dt))
                                : 0;

    Rng rng(seed);
    double drift = -mech.alpha * dt;
    double sigma = std::sqrt(2.0 * mech.beta * dt);
    double jump_rate = 0.0;
    double eps_jump = 0.0;
    if (mech.has_atoms()) {
        for (const auto& [x, m] : mech.atoms().atoms) {
            jump_rate += m;
            drift -= m * x * dt;
        }
    } else if (mech.has_stable()) {
        const auto& s = mech.stable();
        double k = stable_density_const(s);
        eps_jump = std::pow(dt, 1.0 / s.theta) / 10.0;
        jump_rate = k * std::pow(eps_jump, -s.theta) / s.theta;
        drift -= k * std::pow(eps_jump, 1.0 - s.theta) / (s.theta - 1.0) * dt;
        double small_var = k * std::pow(eps_jump, 2.0 - s.theta) / (2.0 - s.theta);
        sigma = std::sqrt(sigma * sigma + small_var * dt);
    }
    auto sample_jump_size = [&](Rng& r) -> double {
        if (mech.has_atoms()) {
            double u = r.uniform() * jump_rate;
            for (const auto& [x, m] : mech.atoms().atoms) {
                if (u < m) return x;
                u -= m;
            }
            return mech.atoms().atoms.back().first;
        }
        const auto& s = mech.stable();
        return eps_jump * std::pow(1.0 - r.uniform(), -1.0 / s.theta);
    };

    ExcursionSample out;
    out.path.dt = dt;
    out.path.seed = seed;

    // current candidate excursion, rebased to its starting infimum
    std::vector<double> cur{0.0};
    std::vector<std::pair<std::size_t, double>> cur_jumps;
    double x = 0.0, inf = 0.0;
    double sup = 0.0;

    for (std::size_t step = 0; step < max_steps; ++step) {
        double inc = drift;
        if (sigma > 0.0) inc += sigma * rng.normal();
        std::vector<double> step_jumps;
        if (jump_rate > 0.0) {
            int k = rng.poisson(jump_rate * dt);
            for (int j = 0; j < k; ++j) {
                double size = sample_jump_size(rng);
                inc += size;
                step_jumps.push_back(size);
            }
        }
        x += inc;
        if (x <= inf) {
            // candidate closed at this step
            if (cur.size() > min_steps + 1) {
                for (double s : step_jumps) cur_jumps.emplace_back(cur.size(), s);
                cur.push_back(0.0);  // clamp the grid overshoot of the zero
                out.path.values = std::move(cur);
                out.path.jumps = std::move(cur_jumps);
                out.local_time_consumed = -inf;  // -I at the excursion start
                out.sup = sup;
                return out;
            }
            inf = std::min(inf, x);
            cur.assign(1, 0.0);
            cur_jumps.clear();
            sup = 0.0;
        } else {
            for (double s : step_jumps) cur_jumps.emplace_back(cur.size(), s);
            cur.push_back(x - inf);
            if (x - inf > sup) sup = x - inf;
            if (cap_steps > 0 && cur.size() > cap_steps + 1) {
                // known sigma > max_duration: discard and start a fresh
                // excursion from the infimum
                ++out.discarded_over_cap;
                x = inf;
                cur.assign(1, 0.0);
                cur_jumps.clear();
                sup = 0.0;
            }
        }
    }
    throw RetryExhausted("sample_excursion: max steps exhausted");
}

}  // namespace levysnake
