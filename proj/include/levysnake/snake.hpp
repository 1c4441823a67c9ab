#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "levysnake/exploration.hpp"
#include "levysnake/grid_path.hpp"
#include "levysnake/levy_sim.hpp"
#include "levysnake/mechanism.hpp"
#include "levysnake/motion.hpp"
#include "levysnake/rng.hpp"

namespace levysnake {

// Persistent storage of snake labels. Each regrowth is one segment holding
// the labels strictly above its base height; the labels below are shared
// with the parent chain, which makes the snake property hold bitwise by
// construction. Memory is O(total regrowth).
class PathArena {
public:
    struct Segment {
        std::int32_t parent;     // -1: grows from the root label
        std::uint32_t base;      // base height in dh steps
        std::vector<Label> pts;  // labels at base+1, ..., base+pts.size()
        std::vector<double> crossings;  // x-crossing heights inside this segment
    };

    PathArena(double dh, Label root, double x_ref)
        : dh_(dh), root_(root), x_(x_ref) {}

    double dh() const { return dh_; }
    double x() const { return x_; }
    const Label& root() const { return root_; }

    std::int32_t add_segment(Segment seg) {
        segments_.push_back(std::move(seg));
        return static_cast<std::int32_t>(segments_.size() - 1);
    }
    const Segment& segment(std::int32_t id) const { return segments_[id]; }

    // label at height index k on the path whose topmost segment is seg
    const Label& label_at(std::int32_t seg, std::uint32_t k) const {
        if (k == 0) return root_;
        while (seg >= 0) {
            const Segment& s = segments_[seg];
            if (k > s.base) {
                std::uint32_t off = k - s.base - 1;
                if (off < s.pts.size()) return s.pts[off];
                throw std::out_of_range("PathArena: height above segment top");
            }
            seg = s.parent;
        }
        return root_;
    }

    // segment whose range covers height index k (for branching at k)
    std::int32_t covering_segment(std::int32_t seg, std::uint32_t k) const {
        if (k == 0) return -1;
        while (seg >= 0) {
            const Segment& s = segments_[seg];
            if (k > s.base) return seg;
            seg = s.parent;
        }
        return -1;
    }

    // lowest crossing height strictly above z on the path (seg, nsteps).
    // A segment's crossing list covers its full extent, so entries above the
    // branch point of the chain below must be skipped via the cap.
    double first_crossing_above(std::int32_t seg, std::uint32_t nsteps,
                                double z) const {
        double best = std::numeric_limits<double>::infinity();
        double cap = static_cast<double>(nsteps) * dh_;
        while (seg >= 0) {
            const Segment& s = segments_[seg];
            for (double c : s.crossings)
                if (c > z && c <= cap && c < best) best = c;
            cap = static_cast<double>(s.base) * dh_;
            if (cap <= z) break;
            seg = s.parent;
        }
        return best;
    }

    // highest crossing height <= the path top
    double last_crossing_below(std::int32_t seg, std::uint32_t nsteps) const {
        double cap = static_cast<double>(nsteps) * dh_;
        while (seg >= 0) {
            const Segment& s = segments_[seg];
            for (auto it = s.crossings.rbegin(); it != s.crossings.rend(); ++it)
                if (*it <= cap) return *it;
            cap = static_cast<double>(s.base) * dh_;
            seg = s.parent;
        }
        return 0.0;
    }

    std::size_t segment_count() const { return segments_.size(); }

private:
    double dh_;
    Label root_;
    double x_;
    std::vector<Segment> segments_;
};

// Time-indexed sequence of (rho_t, labeled path) pairs with the snake
// property. Lifetimes live on the dh lattice: zeta_t = nsteps_t * dh is the
// quantization of the driving height. For mechanisms without jumps rho_t is
// implicit (beta * Lebesgue on [0, zeta_t]); otherwise the materialized
// measures are stored per time.
struct SnakePath {
    double dt = 0.0;
    double dh = 0.0;
    double beta = 0.0;
    std::shared_ptr<PathArena> arena;
    std::vector<std::int32_t> seg;      // topmost segment per time
    std::vector<std::uint32_t> nsteps;  // lifetime in dh steps per time
    std::vector<double> drive_h;        // driving height per time
    std::vector<Label> tip;             // cached tip labels
    std::vector<double> tau;            // cached first-return heights
    std::vector<AtomMeasure> rho;       // empty when rho_implicit
    bool rho_implicit = true;
    double base_shift = 0.0;  // theta_z shift applied to label queries
    std::uint64_t seed = 0;

    std::size_t size() const { return nsteps.size(); }
    double x() const { return arena->x(); }
    double zeta(std::size_t k) const { return static_cast<double>(nsteps[k]) * dh; }

    double sigma() const {
        std::size_t last = size();
        while (last > 1 && nsteps[last - 1] == 0 && nsteps[last - 2] == 0) --last;
        return static_cast<double>(last - 1) * dt;
    }

    Label label_at(std::size_t k, double h) const {
        double hq = h + base_shift;
        std::uint32_t idx = static_cast<std::uint32_t>(
            std::min<double>(std::floor(hq / dh + 1e-9),
                             static_cast<double>(nsteps[k]) + base_steps()));
        return arena->label_at(seg[k], idx);
    }

    std::uint32_t base_steps() const {
        return static_cast<std::uint32_t>(std::llround(base_shift / dh));
    }

    AtomMeasure rho_at(std::size_t k) const {
        if (!rho_implicit) return rho[k];
        AtomMeasure m;
        m.beta = beta;
        m.cont_height = zeta(k);
        return m;
    }

    FiniteLabeledPath materialize(std::size_t k) const {
        FiniteLabeledPath w;
        w.dh = dh;
        std::uint32_t n = nsteps[k], b = base_steps();
        w.labels.reserve(n + 1);
        for (std::uint32_t i = 0; i <= n; ++i)
            w.labels.push_back(arena->label_at(seg[k], b + i));
        return w;
    }

    double sup_tip_abs_dev() const {
        double s = 0.0;
        for (const auto& l : tip) s = std::max(s, std::abs(l.position - x()));
        return s;
    }
};

// Sequential driven-snake construction: from time t to t+1 truncate the
// current path to the lattice quantization of m_H(t, t+1), then extend with
// fresh motion increments up to the quantization of H(t+1).
//
// source_positions, when given, feeds the labels of the initial trunk: as
// long as growth continues the untouched prefix read from the source, labels
// come from it with the local time frozen at the root value; the first
// erosion below the consumed frontier retires the source for good.
inline SnakePath simulate_snake(const std::vector<double>& drive,
                                double dt, double dh,
                                const SpatialMotion& motion, Label init,
                                std::uint64_t seed,
                                const std::vector<double>* source_positions = nullptr) {
    if (!(dh > 0.0) || !(dt > 0.0))
        throw ConfigError("simulate_snake: dt and dh must be > 0");
    if (drive.empty() || drive.front() != 0.0)
        throw ConfigError("simulate_snake: driving height must start at 0");

    SnakePath sp;
    sp.dt = dt;
    sp.dh = dh;
    sp.seed = seed;
    sp.arena = std::make_shared<PathArena>(dh, init, motion.reference_x());
    sp.seg.reserve(drive.size());
    sp.nsteps.reserve(drive.size());
    sp.drive_h = drive;
    sp.tip.reserve(drive.size());
    sp.tau.reserve(drive.size());

    Rng rng(seed);
    const double x = motion.reference_x();
    const double inf = std::numeric_limits<double>::infinity();

    std::int32_t cur_seg = -1;
    std::uint32_t cur_n = 0;
    double cur_tau = inf;

    std::size_t source_frontier = 0;  // lattice steps consumed from the source
    bool source_alive = source_positions != nullptr && source_positions->size() > 1;

    sp.seg.push_back(cur_seg);
    sp.nsteps.push_back(0);
    sp.tip.push_back(init);
    sp.tau.push_back(inf);

    for (std::size_t k = 1; k < drive.size(); ++k) {
        std::uint32_t n_new = static_cast<std::uint32_t>(
            std::floor(drive[k] / dh + 1e-9));
        std::uint32_t n_min = std::min(cur_n, n_new);

        if (source_alive && n_min < source_frontier) source_alive = false;

        if (n_min < cur_n) {
            cur_n = n_min;
            cur_seg = sp.arena->covering_segment(cur_seg, cur_n);
            if (cur_tau > static_cast<double>(cur_n) * dh)
                cur_tau = inf;  // the cached return was erased
        }
        if (n_new > cur_n) {
            PathArena::Segment segment;
            segment.parent = cur_seg;
            segment.base = cur_n;
            Label from = sp.arena->label_at(cur_seg, cur_n);
            segment.pts.reserve(n_new - cur_n);
            for (std::uint32_t i = cur_n; i < n_new; ++i) {
                Label next;
                bool from_source = source_alive && i == source_frontier &&
                                   i + 1 < source_positions->size();
                if (from_source) {
                    next.position = (*source_positions)[i + 1];
                    next.localtime = from.localtime;
                    ++source_frontier;
                } else {
                    next = motion.extend_one(from, dh, rng);
                }
                // crossing bookkeeping shared by both label sources
                bool crossed = (next.position == x && from.position != x) ||
                               (from.position != x && next.position != x &&
                                (from.position < x) != (next.position < x));
                if (crossed) {
                    double p0 = from.position - x, p1 = next.position - x;
                    double frac = p1 == 0.0 ? 1.0 : p0 / (p0 - p1);
                    double ch = (static_cast<double>(i) + frac) * dh;
                    segment.crossings.push_back(ch);
                    if (from_source)
                        next.localtime += motion.crossing_increment(dh, rng);
                    cur_tau = std::min(cur_tau, ch);
                }
                segment.pts.push_back(next);
                from = next;
            }
            cur_seg = sp.arena->add_segment(std::move(segment));
            cur_n = n_new;
        }
        sp.seg.push_back(cur_seg);
        sp.nsteps.push_back(cur_n);
        sp.tip.push_back(sp.arena->label_at(cur_seg, cur_n));
        sp.tau.push_back(cur_tau);
    }
    return sp;
}

namespace detail {

inline bool measure_has_jumps(const BranchingMechanism& mech) {
    return mech.has_atoms() || mech.has_stable();
}

}  // namespace detail

// Attach the exploration measures of the driving Levy path to a snake path.
inline void attach_rho(SnakePath& sp, const GridPath& levy,
                       const BranchingMechanism& mech) {
    sp.beta = mech.beta;
    if (!detail::measure_has_jumps(mech)) {
        sp.rho_implicit = true;
        return;
    }
    sp.rho_implicit = false;
    sp.rho.clear();
    sp.rho.reserve(levy.values.size());
    explore(levy, mech, [&](std::size_t, const ExplorationStack& s) {
        sp.rho.push_back(s.rho());
    });
}

// Snake under N_y(. | sigma > min_duration): height from a conditioned
// psi-Levy excursion, labels grown from (y, 0).
struct SnakeSample {
    SnakePath snake;
    double levy_local_time_consumed = 0.0;  // mean over samples = 1/N(sigma>delta)
    double latent_spine_return = 0.0;       // N_{x,r} sampler only
};

inline SnakeSample sample_snake_Ny(const BranchingMechanism& mech, double y,
                                   double min_duration, double dt, double dh,
                                   const SpatialMotion& motion,
                                   std::uint64_t seed,
                                   double max_duration = 0.0) {
    if (y == motion.reference_x())
        throw ConfigError("sample_snake_Ny: y must differ from x");
    SnakeSample out;
    ExcursionSample exc =
        sample_excursion(mech, min_duration, dt,
                         derive_seed(seed, static_cast<std::uint64_t>(SeedDomain::excursion), 0),
                         200'000'000, max_duration);
    out.levy_local_time_consumed = exc.local_time_consumed;
    GridPath h = height_process(exc.path, mech);
    out.snake = simulate_snake(
        h.values, dt, dh, motion, Label{y, 0.0},
        derive_seed(seed, static_cast<std::uint64_t>(SeedDomain::snake), 0));
    attach_rho(out.snake, exc.path, mech);
    return out;
}

// Snake approximating N_{x,r}(. | sigma > min_duration, latent spine
// excursion > min_spine_return): height as above; the initial trunk's labels
// read from an Ito excursion of the motion conditioned on duration >
// min_spine_return with the local time frozen at r, ordinary motion
// everywhere else.
inline SnakeSample sample_snake_Nxr(const BranchingMechanism& mech, double r,
                                    double min_duration, double min_spine_return,
                                    double dt, double dh,
                                    const SpatialMotion& motion,
                                    std::uint64_t seed,
                                    double max_duration = 0.0) {
    SnakeSample out;
    ExcursionSample exc =
        sample_excursion(mech, min_duration, dt,
                         derive_seed(seed, static_cast<std::uint64_t>(SeedDomain::excursion), 1),
                         200'000'000, max_duration);
    out.levy_local_time_consumed = exc.local_time_consumed;
    GridPath h = height_process(exc.path, mech);

    Rng spine_rng(derive_seed(seed, static_cast<std::uint64_t>(SeedDomain::motion), 2));
    std::vector<double> source =
        motion.sample_excursion_positions(min_spine_return, dh, spine_rng);
    for (double& p : source) p += motion.reference_x();
    out.latent_spine_return =
        static_cast<double>(source.size() - 1) * dh;

    out.snake = simulate_snake(
        h.values, dt, dh, motion, Label{motion.reference_x(), r},
        derive_seed(seed, static_cast<std::uint64_t>(SeedDomain::snake), 3), &source);
    attach_rho(out.snake, exc.path, mech);
    return out;
}

// Structural audit: (S1)/(S2), the Theta_x-bar conditions and the
// branching-label property, checked on the grid. Report only.
struct SnakeAudit {
    bool lifetimes_match = true;        // zeta == quantized driving height
    bool prefixes_agree = true;         // strong snake property
    bool localtime_monotone = true;     // Lambda nondecreasing along paths
    bool localtime_growth_at_x = true;  // growth only at crossings
    bool rho_off_x = true;              // rho does not charge {W = x}
    bool branch_labels_off_x = true;    // no atom pushed with tip label x
    std::string detail;

    bool pass() const {
        return lifetimes_match && prefixes_agree && localtime_monotone &&
               localtime_growth_at_x && rho_off_x && branch_labels_off_x;
    }
};

inline SnakeAudit audit_snake(const SnakePath& sp) {
    SnakeAudit audit;
    std::ostringstream msg;
    const double x = sp.x();

    for (std::size_t k = 0; k < sp.size(); ++k) {
        std::uint32_t expect = static_cast<std::uint32_t>(
            std::floor(sp.drive_h[k] / sp.dh + 1e-9));
        if (sp.nsteps[k] != expect) {
            audit.lifetimes_match = false;
            msg << "lifetime mismatch at t=" << k << "; ";
            break;
        }
    }

    // consecutive prefix agreement below the pairwise minimum
    for (std::size_t k = 0; k + 1 < sp.size() && audit.prefixes_agree; ++k) {
        std::uint32_t m = std::min(sp.nsteps[k], sp.nsteps[k + 1]);
        for (std::uint32_t i = 0; i <= m; i += std::max<std::uint32_t>(1, m / 8)) {
            Label a = sp.arena->label_at(sp.seg[k], sp.base_steps() + i);
            Label b = sp.arena->label_at(sp.seg[k + 1], sp.base_steps() + i);
            if (a.position != b.position || a.localtime != b.localtime) {
                audit.prefixes_agree = false;
                msg << "prefix disagreement at t=" << k << " h-index " << i << "; ";
                break;
            }
        }
    }

    // local time along a sample of materialized paths
    for (std::size_t k = 0; k < sp.size();
         k += std::max<std::size_t>(1, sp.size() / 32)) {
        FiniteLabeledPath w = sp.materialize(k);
        for (std::size_t i = 0; i + 1 < w.labels.size(); ++i) {
            double d = w.labels[i + 1].localtime - w.labels[i].localtime;
            if (d < 0.0) {
                audit.localtime_monotone = false;
                msg << "Lambda decreasing at t=" << k << "; ";
                break;
            }
            if (d > 0.0) {
                double p0 = w.labels[i].position - x;
                double p1 = w.labels[i + 1].position - x;
                bool crossed = (p1 == 0.0 && p0 != 0.0) ||
                               (p0 != 0.0 && p1 != 0.0 && (p0 < 0.0) != (p1 < 0.0));
                if (!crossed) {
                    audit.localtime_growth_at_x = false;
                    msg << "Lambda growth off x at t=" << k << "; ";
                    break;
                }
            }
        }
    }

    if (!sp.rho_implicit) {
        for (std::size_t k = 0; k < sp.size() && audit.rho_off_x; ++k) {
            for (const auto& atom : sp.rho[k].atoms) {
                if (atom.height > sp.zeta(k)) continue;
                if (sp.label_at(k, atom.height).position == x) {
                    audit.rho_off_x = false;
                    msg << "rho charges {W=x} at t=" << k << "; ";
                    break;
                }
            }
        }
        // a fresh atom at time k sits at the previous top height; its label
        // is the then-tip, which must differ from x
        for (std::size_t k = 1; k < sp.size() && audit.branch_labels_off_x; ++k) {
            if (sp.rho[k].atoms.size() > sp.rho[k - 1].atoms.size() &&
                sp.nsteps[k - 1] > 0 && sp.tip[k - 1].position == x) {
                audit.branch_labels_off_x = false;
                msg << "branching with tip label x at t=" << k << "; ";
            }
        }
    }

    audit.detail = msg.str();
    return audit;
}

}  // namespace levysnake
