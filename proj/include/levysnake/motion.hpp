#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <stdexcept>
#include <vector>

#include "levysnake/rng.hpp"

namespace levysnake {

// A spatial label: position in E = R plus the motion's local time at x.
struct Label {
    double position = 0.0;
    double localtime = 0.0;
};

// A finite path of labels sampled at spatial step dh on [0, lifetime].
struct FiniteLabeledPath {
    double dh = 0.0;
    std::vector<Label> labels;  // heights 0, dh, ..., n*dh

    double lifetime() const {
        return labels.empty() ? 0.0
                              : static_cast<double>(labels.size() - 1) * dh;
    }
    const Label& tip() const { return labels.back(); }
};

// The paper's metric on finite paths, with the product metric on labels.
inline double path_distance(const FiniteLabeledPath& w1,
                            const FiniteLabeledPath& w2) {
    double d = std::abs(w1.lifetime() - w2.lifetime());
    std::size_t n = std::max(w1.labels.size(), w2.labels.size());
    double sup = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Label& a = w1.labels[std::min(i, w1.labels.size() - 1)];
        const Label& b = w2.labels[std::min(i, w2.labels.size() - 1)];
        sup = std::max(sup, std::max(std::abs(a.position - b.position),
                                     std::abs(a.localtime - b.localtime)));
    }
    return d + sup;
}

// First return height to x of a labeled path: first interpolated sign change
// of position - x; exact zeros at lattice points (other than the start)
// count as hits. Infinity when the path never returns.
inline double first_return_height(const FiniteLabeledPath& w, double x) {
    for (std::size_t i = 0; i + 1 < w.labels.size(); ++i) {
        double p0 = w.labels[i].position - x;
        double p1 = w.labels[i + 1].position - x;
        if (p1 == 0.0) return static_cast<double>(i + 1) * w.dh;
        if (p0 != 0.0 && ((p0 < 0.0) != (p1 < 0.0)))
            return (static_cast<double>(i) + p0 / (p0 - p1)) * w.dh;
    }
    return std::numeric_limits<double>::infinity();
}

// Markov spatial motion carrying its local time at the reference point x.
// extend_one produces the label one lattice step dh further; the local time
// is nondecreasing and grows only at x-crossings of the sampled skeleton.
class SpatialMotion {
public:
    virtual ~SpatialMotion() = default;

    virtual double reference_x() const = 0;
    virtual Label extend_one(const Label& from, double dh, Rng& rng) const = 0;
    virtual bool is_brownian() const { return false; }

    // Local-time increment booked at one x-crossing of the dh skeleton.
    // Randomized around the calibrated mean so that distinct crossings carry
    // almost surely distinct cumulative local times; the mean fixes the
    // normalization.
    virtual double crossing_increment(double dh, Rng& rng) const = 0;

    // N(tau > s) of the motion's Ito excursion measure, in the local-time
    // normalization used by extend_one.
    virtual double excursion_tail(double s) const = 0;

    // positions of an excursion away from x conditioned on duration >
    // min_duration, on the dh lattice (first and last entries exactly x)
    virtual std::vector<double> sample_excursion_positions(double min_duration,
                                                           double dh,
                                                           Rng& rng) const = 0;

    Label extend(const Label& from, double duration, double dh, Rng& rng,
                 std::vector<Label>* out = nullptr) const {
        std::size_t n = static_cast<std::size_t>(std::llround(duration / dh));
        Label cur = from;
        for (std::size_t i = 0; i < n; ++i) {
            cur = extend_one(cur, dh, rng);
            if (out) out->push_back(cur);
        }
        return cur;
    }
};

// 1-D Brownian motion with local time at x = 0. The local time is the
// occupation density at 0: each strict sign change of the sampled skeleton
// adds sqrt(pi*dh/2), which matches the (1/2eps) band normalization in the
// limit. Arrivals exactly at 0 count; departures from 0 do not, so the
// growth set of the local time is exactly the crossing set.
class BrownianMotion : public SpatialMotion {
public:
    double reference_x() const override { return 0.0; }
    bool is_brownian() const override { return true; }

    static double localtime_quantum(double dh) {
        return std::sqrt(0.5 * M_PI * dh);
    }

    double crossing_increment(double dh, Rng& rng) const override {
        return localtime_quantum(dh) * rng.uniform(0.5, 1.5);
    }

    Label extend_one(const Label& from, double dh, Rng& rng) const override {
        Label next;
        next.position = from.position + std::sqrt(dh) * rng.normal();
        next.localtime = from.localtime;
        bool crossed = (next.position == 0.0 && from.position != 0.0) ||
                       (from.position != 0.0 && next.position != 0.0 &&
                        (from.position < 0.0) != (next.position < 0.0));
        if (crossed) next.localtime += crossing_increment(dh, rng);
        return next;
    }

    // N(tau > s) = sqrt(2/(pi s)) under the occupation-density local time.
    double excursion_tail(double s) const override {
        return std::sqrt(2.0 / (M_PI * s));
    }

    // Ito excursion conditioned on duration > min_duration: the duration has
    // law N(tau in ds | tau > d) with tail (s/d)^{-1/2}, the shape is a
    // normalized excursion built from a Brownian bridge by Vervaat's
    // transform, and the sign is symmetric.
    std::vector<double> sample_excursion_positions(double min_duration, double dh,
                                                   Rng& rng) const override {
        double u = rng.uniform();
        double tau = min_duration / (u * u);
        std::size_t n = std::max<std::size_t>(2, std::llround(tau / dh));
        // Brownian bridge on n steps of variance dh
        std::vector<double> w(n + 1, 0.0);
        for (std::size_t i = 1; i <= n; ++i)
            w[i] = w[i - 1] + std::sqrt(dh) * rng.normal();
        double wn = w[n];
        std::size_t argmin = 0;
        for (std::size_t i = 0; i <= n; ++i) {
            w[i] -= static_cast<double>(i) / static_cast<double>(n) * wn;
            if (w[i] < w[argmin]) argmin = i;
        }
        std::vector<double> e(n + 1, 0.0);
        for (std::size_t i = 0; i <= n; ++i)
            e[i] = w[(argmin + i) % n] - w[argmin];
        e[0] = 0.0;
        e[n] = 0.0;
        double sign = rng.uniform() < 0.5 ? 1.0 : -1.0;
        for (std::size_t i = 1; i < n; ++i) {
            if (e[i] <= 0.0) e[i] = 1e-12;  // interior stays off 0
            e[i] *= sign;
        }
        return e;
    }
};

}  // namespace levysnake
