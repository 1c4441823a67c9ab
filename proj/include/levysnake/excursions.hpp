#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <vector>

#include "levysnake/exploration.hpp"
#include "levysnake/grid_path.hpp"
#include "levysnake/snake.hpp"

namespace levysnake {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// First return height to x of the path at time k, within its own lifetime.
inline double tau_at(const SnakePath& sp, std::size_t k) {
    double t = sp.tau[k];
    return t <= sp.zeta(k) ? t : kInf;
}

// tau of a standalone labeled path (the spec-level entry point; the snake
// modules use the cached per-time values).
inline double tau(const FiniteLabeledPath& w, double x) {
    return first_return_height(w, x);
}

// Geometric eps ladders with a Cauchy stop rule: stop at the first level
// whose sup-distance to the previous one is below rel_tol of the running
// scale. converged=false means the ladder was exhausted and the last
// estimate is returned flagged.
struct LadderSchedule {
    double eps0 = 0.1;
    double ratio = 0.5;
    int max_levels = 7;
    double rel_tol = 0.05;
    double abs_floor = 1e-3;
};

struct LadderPath {
    GridPath path;        // estimate at the chosen eps
    double eps = 0.0;
    bool converged = false;
    std::vector<double> level_totals;  // final value per level
    double last_sup_diff = 0.0;
    // joint tolerance of the chosen pair of levels
    double tolerance(const LadderSchedule& s) const {
        return std::max(s.rel_tol * std::abs(path.values.empty() ? 0.0
                                                                 : path.values.back()),
                        s.abs_floor);
    }
};

namespace detail {

template <typename Integrand>
LadderPath run_ladder(const SnakePath& sp, const LadderSchedule& sched,
                      Integrand&& integrand_at) {
    LadderPath out;
    std::vector<double> prev;
    double eps = sched.eps0;
    for (int level = 0; level < sched.max_levels; ++level, eps *= sched.ratio) {
        std::vector<double> cur(sp.size(), 0.0);
        double acc = 0.0;
        for (std::size_t k = 0; k < sp.size(); ++k) {
            acc += integrand_at(k, eps) * sp.dt / eps;
            cur[k] = acc;
        }
        out.level_totals.push_back(acc);
        if (!prev.empty()) {
            double sup = 0.0;
            for (std::size_t k = 0; k < cur.size(); ++k)
                sup = std::max(sup, std::abs(cur[k] - prev[k]));
            out.last_sup_diff = sup;
            double scale = std::max(std::abs(acc), sched.abs_floor);
            if (sup <= sched.rel_tol * scale) {
                out.path.dt = sp.dt;
                out.path.values = std::move(cur);
                out.eps = eps;
                out.converged = true;
                return out;
            }
        }
        prev = std::move(cur);
    }
    out.path.dt = sp.dt;
    out.path.values = std::move(prev);
    out.eps = eps / sched.ratio;
    out.converged = false;
    return out;
}

}  // namespace detail

// Exit local time L: (1/eps) occupation of {tau(W_s) < H(rho_s) < tau + eps}.
inline LadderPath exit_local_time(const SnakePath& sp,
                                  const LadderSchedule& sched = {}) {
    return detail::run_ladder(sp, sched, [&](std::size_t k, double eps) {
        double t = sp.tau[k];
        double z = sp.zeta(k);
        return (t < z && z < t + eps) ? 1.0 : 0.0;
    });
}

// Truncation tr: time-change by the right inverse of V, removing all times
// with zeta > tau; the retained paths already stop before their return.
inline SnakePath truncate(const SnakePath& sp) {
    SnakePath out;
    out.dt = sp.dt;
    out.dh = sp.dh;
    out.beta = sp.beta;
    out.arena = sp.arena;
    out.rho_implicit = sp.rho_implicit;
    out.base_shift = sp.base_shift;
    out.seed = sp.seed;
    for (std::size_t k = 0; k < sp.size(); ++k) {
        if (sp.zeta(k) <= sp.tau[k]) {
            out.seg.push_back(sp.seg[k]);
            out.nsteps.push_back(sp.nsteps[k]);
            out.drive_h.push_back(sp.zeta(k));
            out.tip.push_back(sp.tip[k]);
            out.tau.push_back(sp.tau[k]);
            if (!sp.rho_implicit) out.rho.push_back(sp.rho[k]);
        }
    }
    if (out.seg.empty()) {
        // V_sigma = 0: constant at the initial state
        out.seg.push_back(sp.seg.empty() ? -1 : sp.seg[0]);
        out.nsteps.push_back(sp.nsteps.empty() ? 0 : sp.nsteps[0]);
        out.drive_h.push_back(out.nsteps[0] * sp.dh);
        out.tip.push_back(sp.tip.empty() ? sp.arena->root() : sp.tip[0]);
        out.tau.push_back(kInf);
        if (!sp.rho_implicit && !sp.rho.empty()) out.rho.push_back(sp.rho[0]);
    }
    return out;
}

// L* from the truncated path alone, via the near-return band
// tau_{delta,upsilon}(w) = inf{ h in [delta, zeta] : |w(h) - x| <= upsilon }.
// The band entry heights are maintained incrementally across the shared
// prefixes, so each ladder level is one linear pass.
struct InsideSchedule {
    double delta0 = 0.1;
    double upsilon0 = 0.2;
    double eps0 = 0.1;
    double ratio_delta = 0.5;
    double ratio_upsilon = 0.7;
    double ratio_eps = 0.5;
    int max_levels = 7;
    double rel_tol = 0.05;
    double abs_floor = 1e-3;
};

inline LadderPath inside_exit_local_time(const SnakePath& sp,
                                         const InsideSchedule& sched = {}) {
    LadderPath out;
    const double x = sp.x();
    std::vector<double> prev;
    double delta = sched.delta0, upsilon = sched.upsilon0, eps = sched.eps0;
    for (int level = 0; level < sched.max_levels;
         ++level, delta *= sched.ratio_delta, upsilon *= sched.ratio_upsilon,
                  eps *= sched.ratio_eps) {
        // forward pass: band entry heights, shared below pairwise minima
        std::vector<double> cur(sp.size(), 0.0);
        double acc = 0.0;
        double band = kInf;  // tau_{delta,upsilon} of the current path
        for (std::size_t k = 0; k < sp.size(); ++k) {
            double z = sp.zeta(k);
            if (k > 0) {
                double m = std::min(z, sp.zeta(k - 1));
                double scan_from = band <= m ? kInf : std::max(m, delta - sp.dh);
                if (band > m) band = kInf;
                if (scan_from < z) {
                    std::uint32_t i0 = static_cast<std::uint32_t>(
                        std::floor(scan_from / sp.dh + 1e-9));
                    for (std::uint32_t i = i0; i <= sp.nsteps[k]; ++i) {
                        double h = static_cast<double>(i) * sp.dh;
                        if (h < delta) continue;
                        if (std::abs(sp.label_at(k, h).position - x) <= upsilon) {
                            band = h;
                            break;
                        }
                    }
                }
            } else {
                band = kInf;
                for (std::uint32_t i = 0; i <= sp.nsteps[k]; ++i) {
                    double h = static_cast<double>(i) * sp.dh;
                    if (h < delta) continue;
                    if (std::abs(sp.label_at(k, h).position - x) <= upsilon) {
                        band = h;
                        break;
                    }
                }
            }
            double t = tau_at(sp, k);
            if (band < z && z < band + eps && band + eps < t) acc += sp.dt / eps;
            cur[k] = acc;
        }
        out.level_totals.push_back(acc);
        if (!prev.empty()) {
            double sup = 0.0;
            for (std::size_t k = 0; k < cur.size(); ++k)
                sup = std::max(sup, std::abs(cur[k] - prev[k]));
            out.last_sup_diff = sup;
            double scale = std::max(std::abs(acc), sched.abs_floor);
            if (sup <= sched.rel_tol * scale) {
                out.path.dt = sp.dt;
                out.path.values = std::move(cur);
                out.eps = eps;
                out.converged = true;
                return out;
            }
        }
        prev = std::move(cur);
    }
    out.path.dt = sp.dt;
    out.path.values = std::move(prev);
    out.eps = eps / sched.ratio_eps;
    out.converged = false;
    return out;
}

// Brownian-case estimator of L*: eps^{-2} occupation of {|tip - x| <= eps}.
inline LadderPath brownian_boundary_estimator(const SnakePath& sp,
                                              const SpatialMotion& motion,
                                              const LadderSchedule& sched = {}) {
    if (!motion.is_brownian())
        throw ConfigError("brownian_boundary_estimator: reference motion only");
    const double x = sp.x();
    LadderPath out;
    std::vector<double> prev;
    double eps = sched.eps0;
    for (int level = 0; level < sched.max_levels; ++level, eps *= sched.ratio) {
        std::vector<double> cur(sp.size(), 0.0);
        double acc = 0.0;
        for (std::size_t k = 0; k < sp.size(); ++k) {
            if (std::abs(sp.tip[k].position - x) <= eps) acc += sp.dt / (eps * eps);
            cur[k] = acc;
        }
        out.level_totals.push_back(acc);
        if (!prev.empty()) {
            double sup = 0.0;
            for (std::size_t k = 0; k < cur.size(); ++k)
                sup = std::max(sup, std::abs(cur[k] - prev[k]));
            out.last_sup_diff = sup;
            double scale = std::max(std::abs(acc), sched.abs_floor);
            if (sup <= sched.rel_tol * scale) {
                out.path.dt = sp.dt;
                out.path.values = std::move(cur);
                out.eps = eps;
                out.converged = true;
                return out;
            }
        }
        prev = std::move(cur);
    }
    out.path.dt = sp.dt;
    out.path.values = std::move(prev);
    out.eps = eps / sched.ratio;
    out.converged = false;
    return out;
}

// The local time A at x. The z-integral of the band indicator is exact per
// time step: Lambda-hat minus Lambda at (zeta - eps)^+, the local-time mass
// of the last-eps height window. Steps whose tip did not move through an
// x-crossing carry no mass, which pins supp dA off the Lambda-hat constancy
// intervals exactly.
inline LadderPath local_time_A(const SnakePath& sp,
                               const LadderSchedule& sched = {}) {
    return detail::run_ladder(sp, sched, [&](std::size_t k, double eps) {
        if (k == 0) return 0.0;
        if (sp.tip[k].localtime == sp.tip[k - 1].localtime) return 0.0;
        double z = sp.zeta(k);
        double below = sp.label_at(k, std::max(z - eps, 0.0)).localtime;
        return sp.tip[k].localtime - below;
    });
}

// Shifted restriction of the snake path to [s1, s2]: theta_z applied to both
// the measures and the labeled paths, with z = zeta(s1) (spec operation) or
// an explicit lattice-aligned level (internal use by find_debuts).
inline SnakePath subtrajectory_at(const SnakePath& sp, std::size_t s1,
                                  std::size_t s2, double z) {
    if (s1 > s2 || s2 >= sp.size())
        throw std::domain_error("subtrajectory: bad time range");
    for (std::size_t k = s1; k <= s2; ++k)
        if (sp.zeta(k) < z - 1e-12)
            throw std::domain_error("subtrajectory: zeta dips below the base");
    std::uint32_t zs = static_cast<std::uint32_t>(std::llround(z / sp.dh));
    SnakePath out;
    out.dt = sp.dt;
    out.dh = sp.dh;
    out.beta = sp.beta;
    out.arena = sp.arena;
    out.rho_implicit = sp.rho_implicit;
    out.base_shift = sp.base_shift + static_cast<double>(zs) * sp.dh;
    out.seed = sp.seed;
    double z_abs = out.base_shift;
    for (std::size_t k = s1; k <= s2; ++k) {
        out.seg.push_back(sp.seg[k]);
        std::uint32_t n = sp.nsteps[k] - zs;
        out.nsteps.push_back(n);
        out.drive_h.push_back(static_cast<double>(n) * sp.dh);
        out.tip.push_back(sp.tip[k]);
        double t = sp.arena->first_crossing_above(
            sp.seg[k], sp.base_steps() + sp.nsteps[k], z_abs);
        out.tau.push_back(t == kInf ? kInf : t - z_abs);
        if (!sp.rho_implicit) out.rho.push_back(shift_measure(sp.rho[k], z));
    }
    return out;
}

inline SnakePath subtrajectory(const SnakePath& sp, std::size_t s1,
                               std::size_t s2) {
    return subtrajectory_at(sp, s1, s2, sp.zeta(s1));
}

// One excursion away from x: visit window [g, d], A-mark, local-time level,
// boundary size and the truncated excursion.
struct DebutRecord {
    std::size_t g_index = 0;
    std::size_t d_index = 0;
    double mark = 0.0;           // A at g
    double level = 0.0;          // Lambda-hat on the component
    double base_height = 0.0;    // height of the debut point
    double boundary_size = 0.0;  // ell_u = L*_infty of the excursion
    double sup_label = 0.0;      // sup |tip - x| over [g, d]
    double duration = 0.0;       // (d - g) * dt
    bool under_resolved = false;
    bool boundary_converged = true;
    SnakePath excursion;
};

struct ExcursionProcess {
    std::vector<DebutRecord> debuts;  // ordered by mark
    std::size_t level_collisions = 0;  // groups split by connectivity
    bool marks_strictly_increasing = true;
};

struct DebutOptions {
    InsideSchedule boundary;
    bool with_excursions = true;   // materialize + truncate each excursion
    bool with_boundaries = true;   // run the L* ladder per excursion
    double min_duration = 0.0;     // skip components shorter than this
};

// Detects excursion components by grouping grid times on their (constant)
// Lambda-hat value, splits groups that are not m-connected, and derives the
// ancestral entry/exit window of each component.
inline ExcursionProcess find_debuts(const SnakePath& sp, const GridPath& A,
                                    const DebutOptions& opts = {}) {
    ExcursionProcess out;
    if (sp.size() == 0) return out;
    const double x = sp.x();

    // group times by exact tip local-time value
    std::map<double, std::vector<std::size_t>> groups;
    for (std::size_t k = 0; k < sp.size(); ++k) {
        if (sp.nsteps[k] == 0) continue;          // at the root
        if (sp.tip[k].position == x) continue;    // boundary time
        groups[sp.tip[k].localtime].push_back(k);
    }

    detail::RangeMin zeta_rmq;
    {
        std::vector<double> zetas(sp.size());
        for (std::size_t k = 0; k < sp.size(); ++k) zetas[k] = sp.zeta(k);
        zeta_rmq.build(zetas);
    }

    for (auto& [level, times] : groups) {
        // base height: last x-crossing on the first time's path
        std::size_t t0 = times.front();
        double base = sp.arena->last_crossing_below(
                          sp.seg[t0], sp.base_steps() + sp.nsteps[t0]) -
                      sp.base_shift;
        if (base < 0.0) base = 0.0;

        // split on m-connectivity: consecutive times of one component never
        // see the height dip below the base
        std::vector<std::pair<std::size_t, std::size_t>> pieces;
        std::size_t piece_start = 0;
        for (std::size_t i = 1; i < times.size(); ++i) {
            if (zeta_rmq.query(times[i - 1], times[i]) < base - 1e-12) {
                pieces.emplace_back(piece_start, i - 1);
                piece_start = i;
            }
        }
        pieces.emplace_back(piece_start, times.size() - 1);
        if (pieces.size() > 1) out.level_collisions += pieces.size() - 1;

        for (auto [lo, hi] : pieces) {
            std::size_t t_first = times[lo], t_last = times[hi];
            DebutRecord rec;
            rec.level = level;
            rec.base_height = base;

            // ancestral entry: first time with min zeta over [g, t_first] >= base
            std::size_t g = 0;
            if (base > 0.0 && zeta_rmq.query(0, t_first) < base) {
                std::size_t a = 0, b = t_first;
                while (b - a > 1) {
                    std::size_t mid = (a + b) / 2;
                    if (zeta_rmq.query(mid, t_first) < base) a = mid; else b = mid;
                }
                g = b;
            }
            std::size_t d = sp.size() - 1;
            if (base > 0.0 && zeta_rmq.query(t_last, sp.size() - 1) < base) {
                std::size_t a = t_last, b = sp.size() - 1;
                while (b - a > 1) {
                    std::size_t mid = (a + b) / 2;
                    if (zeta_rmq.query(t_last, mid) < base) b = mid; else a = mid;
                }
                d = a;
            }

            rec.g_index = g;
            rec.d_index = d;
            rec.mark = A.values[g];
            rec.duration = static_cast<double>(d - g) * sp.dt;
            rec.under_resolved = d - g < 2;
            for (std::size_t k = g; k <= d; ++k)
                rec.sup_label =
                    std::max(rec.sup_label, std::abs(sp.tip[k].position - x));
            if (rec.duration < opts.min_duration) continue;

            if (opts.with_excursions) {
                double zb = std::floor(base / sp.dh + 1e-9) * sp.dh;
                double zmin = zeta_rmq.query(g, d);
                SnakePath sub = subtrajectory_at(sp, g, d, std::min(zb, zmin));
                rec.excursion = truncate(sub);
                if (opts.with_boundaries) {
                    LadderPath lstar =
                        inside_exit_local_time(rec.excursion, opts.boundary);
                    rec.boundary_size =
                        lstar.path.values.empty() ? 0.0 : lstar.path.values.back();
                    rec.boundary_converged = lstar.converged;
                }
            }
            out.debuts.push_back(std::move(rec));
        }
    }

    std::sort(out.debuts.begin(), out.debuts.end(),
              [](const DebutRecord& a, const DebutRecord& b) {
                  return a.mark < b.mark;
              });
    for (std::size_t i = 1; i < out.debuts.size(); ++i)
        if (!(out.debuts[i].mark > out.debuts[i - 1].mark))
            out.marks_strictly_increasing = false;
    return out;
}

// Removes the open interval (g, d) by the right-inverse time change.
inline SnakePath trim(const SnakePath& sp, const DebutRecord& debut) {
    SnakePath out;
    out.dt = sp.dt;
    out.dh = sp.dh;
    out.beta = sp.beta;
    out.arena = sp.arena;
    out.rho_implicit = sp.rho_implicit;
    out.base_shift = sp.base_shift;
    out.seed = sp.seed;
    for (std::size_t k = 0; k < sp.size(); ++k) {
        if (k > debut.g_index && k < debut.d_index) continue;
        out.seg.push_back(sp.seg[k]);
        out.nsteps.push_back(sp.nsteps[k]);
        out.drive_h.push_back(sp.zeta(k));
        out.tip.push_back(sp.tip[k]);
        out.tau.push_back(sp.tau[k]);
        if (!sp.rho_implicit) out.rho.push_back(sp.rho[k]);
    }
    return out;
}

}  // namespace levysnake
