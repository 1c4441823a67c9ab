#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

#include "levysnake/grid_path.hpp"
#include "levysnake/mechanism.hpp"

namespace levysnake {

struct InternalConsistencyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Stack representation of a measure in M_f^0: ordered atoms (height, mass)
// with strictly increasing heights, plus a beta * Lebesgue part on
// [0, cont_height]. Total mass = beta*cont_height + sum of atom masses.
struct AtomMeasure {
    struct Atom {
        double height;
        double mass;
    };
    std::vector<Atom> atoms;
    double cont_height = 0.0;
    double beta = 0.0;

    bool is_zero() const { return atoms.empty() && cont_height == 0.0; }

    double total_mass() const {
        double s = beta * cont_height;
        for (const auto& a : atoms) s += a.mass;
        return s;
    }

    double top_height() const {
        double h = cont_height;
        if (!atoms.empty()) h = std::max(h, atoms.back().height);
        return h;
    }

    // mass of [0, r]
    double mass_below(double r) const {
        double s = beta * std::min(r, cont_height);
        for (const auto& a : atoms) {
            if (a.height > r) break;
            s += a.mass;
        }
        return s;
    }

    bool in_m0f() const {
        if (is_zero()) return true;
        if (beta > 0.0) return cont_height >= top_height();
        return true;  // purely atomic measures have discrete support anyway
    }
};

inline double height_of(const AtomMeasure& m) { return m.top_height(); }

// kappa_a: remove mass a from the tip of the support; zero when a >= <mu,1>.
inline AtomMeasure prune(const AtomMeasure& mu, double a) {
    if (a <= 0.0) return mu;
    double target = mu.total_mass() - a;
    if (target <= 0.0) return AtomMeasure{{}, 0.0, mu.beta};

    AtomMeasure out;
    out.beta = mu.beta;
    double acc = 0.0;     // mass accumulated strictly below the current point
    double prev_h = 0.0;  // height reached so far
    for (const auto& atom : mu.atoms) {
        double seg_lo = std::min(prev_h, mu.cont_height);
        double seg_hi = std::min(atom.height, mu.cont_height);
        double cont_mass = mu.beta * (seg_hi - seg_lo);
        if (acc + cont_mass >= target) {
            // cut inside the continuous stretch below this atom
            double h_star = seg_lo + (target - acc) / mu.beta;
            out.cont_height = h_star;
            return out;
        }
        acc += cont_mass;
        if (acc + atom.mass >= target) {
            // cut inside the atom: keep the partial mass
            out.cont_height = std::min(atom.height, mu.cont_height);
            out.atoms.push_back({atom.height, target - acc});
            return out;
        }
        acc += atom.mass;
        out.atoms.push_back(atom);
        prev_h = atom.height;
    }
    // cut inside the continuous stretch above the last atom
    double seg_lo = std::min(prev_h, mu.cont_height);
    out.cont_height = seg_lo + (target - acc) / mu.beta;
    return out;
}

// [mu, nu]: nu shifted up by H(mu) and appended. When beta > 0 both parts
// must have matching beta and mu must fill its support, otherwise the single
// cont_height representation cannot hold the result.
inline AtomMeasure concatenate(const AtomMeasure& mu, const AtomMeasure& nu) {
    if (mu.is_zero()) return nu;
    if (nu.is_zero()) return mu;
    if (mu.beta != nu.beta)
        throw ConfigError("concatenate: incompatible beta fields");
    if (mu.beta > 0.0 && !mu.in_m0f())
        throw ConfigError("concatenate: mu must fill [0, H(mu)] when beta > 0");
    double shift = height_of(mu);
    AtomMeasure out = mu;
    out.cont_height = mu.beta > 0.0 ? shift + nu.cont_height : 0.0;
    for (const auto& a : nu.atoms) {
        double h = a.height + shift;
        if (!out.atoms.empty() && out.atoms.back().height == h)
            out.atoms.back().mass += a.mass;
        else
            out.atoms.push_back({h, a.mass});
    }
    return out;
}

// theta_z: drop mass at heights <= z, shift down by z.
inline AtomMeasure shift_measure(const AtomMeasure& mu, double z) {
    if (z <= 0.0) return mu;
    AtomMeasure out;
    out.beta = mu.beta;
    out.cont_height = std::max(mu.cont_height - z, 0.0);
    for (const auto& a : mu.atoms)
        if (a.height > z) out.atoms.push_back({a.height - z, a.mass});
    return out;
}

// The exploration stack. Entries carry the cumulative mass of [0, height]
// (cum) so that the total never needs a long summation, plus the original
// jump size so the dual eta comes out lazily: the eta-mass of an atom is
// jump - rho_mass, finalized only when queried.
class ExplorationStack {
public:
    explicit ExplorationStack(const BranchingMechanism& mech)
        : beta_(mech.beta) {}

    // One grid step. new_mass must be the exact X_{k+1} - I_{k+1}; jumps are
    // the jump sizes inside the step.
    void advance(double new_mass, const std::vector<double>& jumps) {
        for (double j : jumps) {
            double h = height();
            entries_.push_back({h, mass_ + j, j});
            mass_ += j;
        }
        if (new_mass > mass_) {
            if (beta_ <= 0.0 && new_mass - mass_ > 1e-12)
                throw InternalConsistencyError(
                    "exploration: positive continuous increment with beta = 0");
            mass_ = new_mass;
        } else if (new_mass < mass_) {
            prune_to(new_mass);
        }
        if (std::abs(mass_ - new_mass) > 1e-9)
            throw InternalConsistencyError("exploration: mass bookkeeping drift");
        mass_ = new_mass;
    }

    double mass() const { return mass_; }

    double height() const {
        if (beta_ > 0.0) {
            double h_top = entries_.empty() ? 0.0 : entries_.back().height;
            double cum_top = entries_.empty() ? 0.0 : entries_.back().cum;
            return h_top + std::max(mass_ - cum_top, 0.0) / beta_;
        }
        return entries_.empty() ? 0.0 : entries_.back().height;
    }

    std::size_t depth() const { return entries_.size(); }

    AtomMeasure rho() const {
        AtomMeasure out;
        out.beta = beta_;
        out.cont_height = beta_ > 0.0 ? height() : 0.0;
        double below = 0.0;
        double prev_h = 0.0;
        for (const auto& e : entries_) {
            double m = e.cum - below - beta_ * (e.height - prev_h);
            out.atoms.push_back({e.height, m});
            below = e.cum;
            prev_h = e.height;
        }
        return out;
    }

    AtomMeasure eta() const {
        AtomMeasure out;
        out.beta = beta_;
        out.cont_height = beta_ > 0.0 ? height() : 0.0;
        double below = 0.0;
        double prev_h = 0.0;
        for (const auto& e : entries_) {
            double m = e.cum - below - beta_ * (e.height - prev_h);
            double eta_m = e.jump - m;
            if (eta_m > 0.0) out.atoms.push_back({e.height, eta_m});
            below = e.cum;
            prev_h = e.height;
        }
        return out;
    }

    void reset() {
        entries_.clear();
        mass_ = 0.0;
    }

private:
    struct Entry {
        double height;
        double cum;   // mass of [0, height] under rho
        double jump;  // original jump size (rho mass + eta mass)
    };

    void prune_to(double target) {
        if (target <= 0.0) {
            entries_.clear();
            mass_ = 0.0;
            return;
        }
        while (!entries_.empty()) {
            const Entry& top = entries_.back();
            double prev_cum = entries_.size() > 1 ? entries_[entries_.size() - 2].cum : 0.0;
            double prev_h = entries_.size() > 1 ? entries_[entries_.size() - 2].height : 0.0;
            double below_atom = prev_cum + beta_ * (top.height - prev_h);
            if (target >= top.cum) break;          // cut above the top atom
            if (target > below_atom) {             // partial consumption
                entries_.back().cum = target;
                break;
            }
            entries_.pop_back();
        }
        mass_ = target;
    }

    double beta_;
    double mass_ = 0.0;
    std::vector<Entry> entries_;
};

struct ExplorationState {
    AtomMeasure rho;
    AtomMeasure eta;
    double height = 0.0;
};

// Streams (rho_t, eta_t, H_t) over the grid. The visitor receives the grid
// index and the stack; materialize rho()/eta() only where needed.
template <typename Visitor>
void explore(const GridPath& path, const BranchingMechanism& mech,
             Visitor&& visit) {
    ExplorationStack stack(mech);
    std::vector<double> step_jumps;
    std::size_t jump_pos = 0;
    double inf = path.values.empty() ? 0.0 : path.values.front();
    visit(static_cast<std::size_t>(0), stack);
    for (std::size_t i = 1; i < path.values.size(); ++i) {
        step_jumps.clear();
        while (jump_pos < path.jumps.size() && path.jumps[jump_pos].first == i) {
            step_jumps.push_back(path.jumps[jump_pos].second);
            ++jump_pos;
        }
        inf = std::min(inf, path.values[i]);
        stack.advance(path.values[i] - inf, step_jumps);
        visit(i, stack);
    }
}

inline std::vector<ExplorationState> exploration_process(
    const GridPath& path, const BranchingMechanism& mech) {
    std::vector<ExplorationState> out;
    out.reserve(path.values.size());
    explore(path, mech, [&](std::size_t, const ExplorationStack& s) {
        out.push_back({s.rho(), s.eta(), s.height()});
    });
    return out;
}

inline GridPath height_process(const GridPath& path, const BranchingMechanism& mech) {
    GridPath h;
    h.dt = path.dt;
    h.seed = path.seed;
    h.values.reserve(path.values.size());
    explore(path, mech, [&](std::size_t, const ExplorationStack& s) {
        h.values.push_back(s.height());
    });
    return h;
}

// rho started from mu: rho^mu_t = [kappa_{-I_t} mu, rho_t].
inline std::vector<AtomMeasure> start_from_mu(const AtomMeasure& mu,
                                              const GridPath& path,
                                              const BranchingMechanism& mech) {
    if (mu.beta != mech.beta)
        throw ConfigError("start_from_mu: mu.beta must match the mechanism");
    std::vector<AtomMeasure> out;
    out.reserve(path.values.size());
    double inf = path.values.empty() ? 0.0 : path.values.front();
    explore(path, mech, [&](std::size_t i, const ExplorationStack& s) {
        inf = std::min(inf, path.values[i]);
        out.push_back(concatenate(prune(mu, -inf), s.rho()));
    });
    return out;
}

// The literal O(n^2) estimator (1/eps) int_0^t dr 1{X_r < I_{r,t} + eps};
// used as an oracle against the stack on short paths.
inline GridPath height_estimator_direct(const GridPath& path, double eps) {
    if (!(eps > 0.0)) throw std::domain_error("height_estimator_direct: eps <= 0");
    GridPath h;
    h.dt = path.dt;
    h.values.assign(path.values.size(), 0.0);
    for (std::size_t t = 0; t < path.values.size(); ++t) {
        double minv = path.values[t];
        std::size_t count = 0;
        for (std::size_t r = t + 1; r-- > 0;) {
            if (path.values[r] < minv) minv = path.values[r];
            if (path.values[r] < minv + eps) ++count;
        }
        h.values[t] = static_cast<double>(count) * path.dt / eps;
    }
    return h;
}

namespace detail {

// Sparse-table range minimum over a value array; O(1) queries.
class RangeMin {
public:
    RangeMin() = default;
    explicit RangeMin(const std::vector<double>& v) { build(v); }

    void build(const std::vector<double>& v) {
        std::size_t n = v.size();
        levels_.clear();
        if (n == 0) return;
        levels_.push_back(v);
        for (std::size_t len = 1; 2 * len <= n; len *= 2) {
            const auto& prev = levels_.back();
            std::vector<double> next(n - 2 * len + 1);
            for (std::size_t i = 0; i + 2 * len <= n; ++i)
                next[i] = std::min(prev[i], prev[i + len]);
            levels_.push_back(std::move(next));
        }
    }

    // min over the inclusive index range [a, b]
    double query(std::size_t a, std::size_t b) const {
        if (a > b) std::swap(a, b);
        std::size_t span = b - a + 1;
        std::size_t k = std::bit_width(span) - 1;
        return std::min(levels_[k][a], levels_[k][b + 1 - (std::size_t{1} << k)]);
    }

private:
    std::vector<std::vector<double>> levels_;
};

}  // namespace detail

struct ReconstructionResult {
    GridPath x_hat;                 // estimate at the smallest eps
    std::vector<GridPath> ladder;   // one estimate per eps in the schedule
};

// X reconstructed from a height skeleton: X = (X - I estimate) + (I
// estimate), both band-occupation estimators at each eps of the schedule.
inline ReconstructionResult reconstruct_x_from_h_ladder(
    const GridPath& h, const std::vector<double>& eps_sequence) {
    ReconstructionResult res;
    const std::size_t n = h.values.size();
    detail::RangeMin rmq(h.values);

    for (double eps : eps_sequence) {
        GridPath est;
        est.dt = h.dt;
        est.values.assign(n, 0.0);
        if (n == 0) {
            res.ladder.push_back(est);
            continue;
        }
        // X - I part: for each r the t-window with m(t,r) in (max(H_r-eps,0), H_r)
        std::vector<double> diff(n + 1, 0.0);
        for (std::size_t r = 1; r < n; ++r) {
            double hr = h.values[r];
            if (hr <= 0.0) continue;
            if (rmq.query(0, r) >= hr) continue;
            // f(t) = min over [t, r] is nondecreasing in t with f(r) = hr.
            // t_hi: largest t with f(t) < hr.
            std::size_t lo = 0, hi = r;
            while (hi - lo > 1) {
                std::size_t mid = (lo + hi) / 2;
                if (rmq.query(mid, r) < hr) lo = mid; else hi = mid;
            }
            std::size_t t_hi = lo;
            double a = std::max(hr - eps, 0.0);
            // t_lo: smallest t with min over [t, r] > a
            std::size_t t_lo;
            if (rmq.query(0, r) > a) {
                t_lo = 0;
            } else {
                std::size_t llo = 0, lhi = r;  // min over [llo,r] <= a, want first > a
                while (lhi - llo > 1) {
                    std::size_t mid = (llo + lhi) / 2;
                    if (rmq.query(mid, r) > a) lhi = mid; else llo = mid;
                }
                t_lo = lhi;
            }
            if (t_lo <= t_hi) {
                diff[t_lo] += h.dt / eps;
                diff[t_hi + 1] -= h.dt / eps;
            }
        }
        double run = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            run += diff[t];
            est.values[t] = run;
        }
        // I part: -(1/eps) * occupation of (0, eps) by H
        double occ = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            if (h.values[t] > 0.0 && h.values[t] < eps) occ += h.dt;
            est.values[t] -= occ / eps;
        }
        res.ladder.push_back(std::move(est));
    }
    res.x_hat = res.ladder.empty() ? GridPath{} : res.ladder.back();
    return res;
}

inline GridPath reconstruct_x_from_h(const GridPath& h,
                                     const std::vector<double>& eps_sequence) {
    return reconstruct_x_from_h_ladder(h, eps_sequence).x_hat;
}

}  // namespace levysnake
