#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "levysnake/exploration.hpp"
#include "levysnake/grid_path.hpp"

namespace levysnake {

// Queries on the real tree coded by a continuous nonnegative function h,
// given as a grid skeleton with linear interpolation between grid points.
// Range minima come from a sparse table; interpolated crossings are
// compared with tolerance 1e-12, shared grid values exactly.
class CodingFunction {
public:
    explicit CodingFunction(GridPath h) : h_(std::move(h)) {
        if (h_.values.empty()) throw std::domain_error("CodingFunction: empty path");
        for (double v : h_.values)
            if (v < 0.0) throw std::domain_error("CodingFunction: negative value");
        rmq_.build(h_.values);
        // lifetime: last index after which the values are identically 0
        std::size_t last = h_.values.size() - 1;
        while (last > 0 && h_.values[last] == 0.0 && h_.values[last - 1] == 0.0)
            --last;
        sigma_ = static_cast<double>(last) * h_.dt;
    }

    static constexpr double kInterpTol = 1e-12;

    const GridPath& grid() const { return h_; }
    double dt() const { return h_.dt; }
    double sigma() const { return sigma_; }
    std::size_t size() const { return h_.values.size(); }

    double value_at_index(std::size_t i) const { return h_.values[i]; }

    // h(t) by linear interpolation
    double value(double t) const {
        check_range(t);
        double pos = t / h_.dt;
        std::size_t i = static_cast<std::size_t>(pos);
        if (i + 1 >= h_.values.size()) return h_.values.back();
        double frac = pos - static_cast<double>(i);
        if (frac == 0.0) return h_.values[i];
        return h_.values[i] + frac * (h_.values[i + 1] - h_.values[i]);
    }

    // m_h(s, t): minimum of h over [s ^ t, s v t]
    double min_between(double s, double t) const {
        check_range(s);
        check_range(t);
        if (s > t) std::swap(s, t);
        double m = std::min(value(s), value(t));
        std::size_t lo = static_cast<std::size_t>(std::ceil(s / h_.dt));
        std::size_t hi = static_cast<std::size_t>(std::floor(t / h_.dt));
        if (lo <= hi && hi < h_.values.size()) m = std::min(m, rmq_.query(lo, hi));
        return m;
    }

    // d_h(s, t) = h(s) + h(t) - 2 m_h(s, t)
    double distance(double s, double t) const {
        return value(s) + value(t) - 2.0 * min_between(s, t);
    }

    // true iff the point coded by s is an ancestor of the point coded by t
    bool is_ancestor(double s, double t) const {
        return min_between(s, t) >= value(s) - kInterpTol;
    }

    // First and last visit times (g, d) of the point coded by s: g is the
    // first time t with d_h(t, s) = 0, and d = inf{t > g : h(t) < h(s)}.
    std::pair<double, double> visit_times(double s) const {
        check_range(s);
        double v = value(s);
        double g = first_time_with_min_at_least(s, v);
        double d = first_drop_below(s, v);
        return {g, d};
    }

    // Times r in the ancestral windows with m_h(r, anchor) = h(r), i.e. the
    // geodesic from the point coded by s to the point coded by t, through
    // their common ancestor; discretized to the grid plus exact endpoints.
    std::vector<double> geodesic(double s, double t) const {
        check_range(s);
        check_range(t);
        std::vector<double> out;
        double gs = visit_times(s).first;
        double gt = visit_times(t).first;
        if (gs > gt) std::swap(gs, gt);
        // common ancestor: the argmin over [gs, gt]
        double m = min_between(gs, gt);
        auto emit_chain = [&](double anchor) {
            // grid times r in [gs, gt] on the ancestral line of anchor
            out.push_back(anchor);
            std::size_t lo = static_cast<std::size_t>(std::ceil(gs / h_.dt));
            std::size_t hi = static_cast<std::size_t>(std::floor(gt / h_.dt));
            for (std::size_t i = lo; i <= hi && i < h_.values.size(); ++i) {
                double r = static_cast<double>(i) * h_.dt;
                double hv = h_.values[i];
                if (hv < m - kInterpTol) continue;
                if (min_between(std::min(r, anchor), std::max(r, anchor)) >=
                    hv - kInterpTol)
                    out.push_back(r);
            }
        };
        emit_chain(gs);
        emit_chain(gt);
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

private:
    void check_range(double t) const {
        if (t < 0.0 || t > sigma_ + kInterpTol)
            throw std::domain_error("CodingFunction: time outside [0, sigma]");
    }

    // first time g <= s with min over [g, s] >= v (entry into the subtree
    // at level v); the boundary is an interpolated crossing of level v
    double first_time_with_min_at_least(double s, double v) const {
        std::size_t si = static_cast<std::size_t>(std::floor(s / h_.dt));
        // find the last grid index i <= si with h[i] < v (strictly below)
        if (value(s) < v + kInterpTol && v <= 0.0) return 0.0;
        std::size_t lo = 0;
        bool found = false;
        // f(i) = min over grid [i, si]: nondecreasing in i
        if (si > 0 && rmq_.query(0, si) < v) {
            std::size_t a = 0, b = si;
            while (b - a > 1) {
                std::size_t mid = (a + b) / 2;
                if (rmq_.query(mid, si) < v) a = mid; else b = mid;
            }
            lo = a;  // last grid index with a dip below v on [lo, si]
            found = true;
        }
        if (!found) return 0.0;
        // crossing of level v inside [lo, lo+1]
        double h0 = h_.values[lo], h1 = h_.values[lo + 1];
        if (h1 == h0) return static_cast<double>(lo + 1) * h_.dt;
        double frac = (v - h0) / (h1 - h0);
        frac = std::clamp(frac, 0.0, 1.0);
        return (static_cast<double>(lo) + frac) * h_.dt;
    }

    // inf{t > g : h(t) < v} computed forward from s (h >= v on [g, s])
    double first_drop_below(double s, double v) const {
        std::size_t si = static_cast<std::size_t>(std::ceil(s / h_.dt));
        std::size_t n = h_.values.size();
        if (si >= n) return sigma_;
        if (rmq_.query(si, n - 1) >= v && v > 0.0) return sigma_;
        if (v <= 0.0) return sigma_;
        std::size_t a = si, b = n - 1;
        // f(i) = min over [si, i]: nonincreasing in i; find first i with f < v
        if (rmq_.query(si, si) < v) {
            a = si;
        } else {
            while (b - a > 1) {
                std::size_t mid = (a + b) / 2;
                if (rmq_.query(si, mid) < v) b = mid; else a = mid;
            }
            a = b;
        }
        // crossing inside [a-1, a]
        if (a == 0) return 0.0;
        double h0 = h_.values[a - 1], h1 = h_.values[a];
        if (h1 >= v) return static_cast<double>(a) * h_.dt;
        if (h1 == h0) return static_cast<double>(a) * h_.dt;
        double frac = (v - h0) / (h1 - h0);
        frac = std::clamp(frac, 0.0, 1.0);
        return (static_cast<double>(a - 1) + frac) * h_.dt;
    }

    GridPath h_;
    detail::RangeMin rmq_;
    double sigma_ = 0.0;
};

inline double m_h(const CodingFunction& h, double s, double t) {
    return h.min_between(s, t);
}
inline double d_h(const CodingFunction& h, double s, double t) {
    return h.distance(s, t);
}

}  // namespace levysnake
