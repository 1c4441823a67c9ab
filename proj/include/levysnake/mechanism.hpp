#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "levysnake/rng.hpp"

namespace levysnake {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// psi(lambda) = alpha*lambda + beta*lambda^2 + int pi(dx)(e^{-lambda x}-1+lambda x).
//
// The Levy part is one of: none, stable (normalized so psi = c*lambda^theta
// exactly, the implied pi density being recovered analytically when
// sampling), or a finite list of atoms (location, mass).
struct StablePart {
    double theta = 1.5;  // in (1,2)
    double c = 1.0;      // scale, > 0
};
struct AtomsPart {
    std::vector<std::pair<double, double>> atoms;  // (location x>0, mass m>0)
};

struct BranchingMechanism {
    double alpha = 0.0;
    double beta = 0.0;
    std::variant<std::monostate, StablePart, AtomsPart> levy_part;

    bool has_stable() const { return std::holds_alternative<StablePart>(levy_part); }
    bool has_atoms() const { return std::holds_alternative<AtomsPart>(levy_part); }
    const StablePart& stable() const { return std::get<StablePart>(levy_part); }
    const AtomsPart& atoms() const { return std::get<AtomsPart>(levy_part); }
};

inline BranchingMechanism quadratic_mechanism(double beta = 0.5, double alpha = 0.0) {
    return BranchingMechanism{alpha, beta, std::monostate{}};
}

// For psi = c*lambda^theta the Levy density is c/Gamma(-theta) * x^{-1-theta},
// Gamma(-theta) > 0 for theta in (1,2).
inline double stable_density_const(const StablePart& s) {
    return s.c / std::tgamma(-s.theta);
}

inline double eval_psi(const BranchingMechanism& mech, double lambda) {
    if (lambda < 0.0) throw std::domain_error("eval_psi: negative lambda");
    double v = mech.alpha * lambda + mech.beta * lambda * lambda;
    if (mech.has_stable()) {
        const auto& s = mech.stable();
        v += s.c * std::pow(lambda, s.theta);
    } else if (mech.has_atoms()) {
        for (const auto& [x, m] : mech.atoms().atoms)
            v += m * (std::expm1(-lambda * x) + lambda * x);
    }
    return v;
}

inline double eval_psi_prime(const BranchingMechanism& mech, double lambda) {
    if (lambda < 0.0) throw std::domain_error("eval_psi_prime: negative lambda");
    double v = mech.alpha + 2.0 * mech.beta * lambda;
    if (mech.has_stable()) {
        const auto& s = mech.stable();
        v += s.c * s.theta * std::pow(lambda, s.theta - 1.0);
    } else if (mech.has_atoms()) {
        for (const auto& [x, m] : mech.atoms().atoms)
            v += m * x * (-std::expm1(-lambda * x));
    }
    return v;
}

// Laplace exponent of the 2-dimensional subordinator used by the spinal
// decompositions: (psi(l1)-psi(l2))/(l1-l2) - alpha, with the diagonal value
// psi'(l) - alpha taken analytically.
inline double eval_subordinator_exponent(const BranchingMechanism& mech,
                                         double lambda1, double lambda2) {
    if (lambda1 < 0.0 || lambda2 < 0.0)
        throw std::domain_error("eval_subordinator_exponent: negative lambda");
    if (lambda1 == lambda2) return eval_psi_prime(mech, lambda1) - mech.alpha;
    return (eval_psi(mech, lambda1) - eval_psi(mech, lambda2)) / (lambda1 - lambda2) -
           mech.alpha;
}

namespace detail {

inline double simpson(const std::function<double(double)>& f, double a, double b,
                      double fa, double fm, double fb) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

inline double adaptive_simpson(const std::function<double(double)>& f, double a,
                               double b, double fa, double fm, double fb,
                               double whole, double tol, int depth) {
    double m = 0.5 * (a + b);
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double left = simpson(f, a, m, fa, flm, fm);
    double right = simpson(f, m, b, fm, frm, fb);
    if (depth <= 0) return left + right;
    if (std::abs(left + right - whole) <= 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return adaptive_simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) +
           adaptive_simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1);
}

}  // namespace detail

inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double tol = 1e-9) {
    if (!(b > a)) return 0.0;
    double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    double whole = detail::simpson(f, a, b, fa, fm, fb);
    return detail::adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 40);
}

// int_v^infty dlambda / psi(lambda), adaptive quadrature with the log
// substitution lambda = e^u on the tail. Throws when the tail does not decay
// (psi sublinear at infinity).
template <typename Psi>
double psi_tail_integral(const Psi& psi, double v, double tol = 1e-9) {
    if (v <= 0.0) throw std::domain_error("psi_tail_integral: v must be > 0");
    auto g = [&](double u) {
        double lam = std::exp(u);
        return lam / psi(lam);
    };
    double total = 0.0;
    double lo = std::log(v);
    double span = 2.0;
    for (int seg = 0; seg < 200; ++seg) {
        double hi = lo + span;
        double piece = integrate(g, lo, hi, tol / 4.0);
        total += piece;
        if (piece < tol && g(hi) * span < tol) return total;
        lo = hi;
    }
    throw NumericalError("psi_tail_integral: tail integral does not converge");
}

// Solve int_v^infty dlambda/psi = a for v, by bisection on the numerically
// integrated tail. Works for any positive increasing psi-like callable.
template <typename Psi>
double solve_v_generic(const Psi& psi, double a, double tol = 1e-9) {
    if (!(a > 0.0)) throw std::domain_error("solve_v: a must be > 0");
    auto tail = [&](double v) { return psi_tail_integral(psi, v, tol); };
    double lo = 1.0, hi = 1.0;
    while (tail(hi) > a) {
        hi *= 2.0;
        if (hi > 1e18) throw NumericalError("solve_v: no upper bracket");
    }
    while (tail(lo) < a) {
        lo /= 2.0;
        if (lo < 1e-18) throw NumericalError("solve_v: no lower bracket");
    }
    for (int it = 0; it < 200 && hi - lo > 1e-12 * std::max(1.0, hi); ++it) {
        double mid = 0.5 * (lo + hi);
        if (tail(mid) > a) lo = mid; else hi = mid;
    }
    return 0.5 * (lo + hi);
}

inline double solve_v(const BranchingMechanism& mech, double a) {
    return solve_v_generic([&](double lam) { return eval_psi(mech, lam); }, a);
}

// One realization of the marked bivariate subordinator (J_a, J-check_a):
// atom times Poisson on [0, horizon], each one-dimensional pi-jump of size x
// splitting as (u*x, (1-u)*x) with u uniform, intensity x*pi(dx)dt, plus
// drift beta per unit time in each coordinate.
struct TiltedSubordinatorSample {
    double horizon = 0.0;
    struct Atom {
        double time;
        double mass1;
        double mass2;
    };
    std::vector<Atom> atoms;
    double drift1 = 0.0;
    double drift2 = 0.0;

    double total_mass1() const {
        double s = drift1 * horizon;
        for (const auto& a : atoms) s += a.mass1;
        return s;
    }
    double total_mass2() const {
        double s = drift2 * horizon;
        for (const auto& a : atoms) s += a.mass2;
        return s;
    }
};

inline TiltedSubordinatorSample sample_marked_subordinator(
    const BranchingMechanism& mech, double horizon, std::uint64_t seed,
    double stable_cutoff = 1e-4) {
    if (!(horizon > 0.0))
        throw std::domain_error("sample_marked_subordinator: horizon must be > 0");
    TiltedSubordinatorSample out;
    out.horizon = horizon;
    out.drift1 = out.drift2 = mech.beta;
    Rng rng(seed);

    auto add_jump = [&](double t, double x) {
        double u = rng.uniform();
        out.atoms.push_back({t, u * x, (1.0 - u) * x});
    };

    if (mech.has_atoms()) {
        for (const auto& [x, m] : mech.atoms().atoms) {
            // bivariate jump rate from this atom: x * m per unit time
            double rate = x * m;
            double t = rng.exponential(rate);
            while (t < horizon) {
                add_jump(t, x);
                t += rng.exponential(rate);
            }
        }
    } else if (mech.has_stable()) {
        // x*pi(dx) = k x^{-theta} dx; jumps below the cutoff are folded into
        // the drift through their mean mass.
        const auto& s = mech.stable();
        double k = stable_density_const(s);
        double theta = s.theta;
        double rate = k * std::pow(stable_cutoff, 1.0 - theta) / (theta - 1.0);
        double small_mean =
            0.5 * k * std::pow(stable_cutoff, 2.0 - theta) / (2.0 - theta);
        out.drift1 += small_mean;
        out.drift2 += small_mean;
        double t = rng.exponential(rate);
        while (t < horizon) {
            // size density on (cutoff, inf) proportional to x^{-theta}
            double u = rng.uniform();
            double x = stable_cutoff * std::pow(1.0 - u, -1.0 / (theta - 1.0));
            add_jump(t, x);
            t += rng.exponential(rate);
        }
    }
    std::sort(out.atoms.begin(), out.atoms.end(),
              [](const auto& a, const auto& b) { return a.time < b.time; });
    return out;
}

// Validation report: standing assumptions on psi plus the growth exponent
// Upsilon = sup{ r : lambda^{-r} psi(lambda) -> infinity } needed by (H0').
struct MechanismReport {
    bool params_valid = false;
    bool psi_convex = false;
    bool integrable = false;  // int_1^inf dlambda/psi < infinity
    double upsilon = 1.0;
    double tail_integral = 0.0;  // int_1^L dlambda/psi at the probe cutoff
    std::string detail;

    bool pass() const { return params_valid && psi_convex && integrable; }
};

inline MechanismReport validate(const BranchingMechanism& mech) {
    MechanismReport rep;
    std::ostringstream msg;

    rep.params_valid = mech.alpha >= 0.0 && mech.beta >= 0.0;
    if (mech.has_stable()) {
        const auto& s = mech.stable();
        rep.params_valid = rep.params_valid && s.theta > 1.0 && s.theta < 2.0 && s.c > 0.0;
        if (!(s.theta > 1.0 && s.theta < 2.0))
            msg << "stable index outside (1,2); ";
    } else if (mech.has_atoms()) {
        for (const auto& [x, m] : mech.atoms().atoms)
            if (!(x > 0.0) || !(m > 0.0)) {
                rep.params_valid = false;
                msg << "atom with nonpositive location or mass; ";
            }
    }
    if (!rep.params_valid) {
        rep.detail = msg.str();
        return rep;
    }

    // Growth exponent.
    if (mech.beta > 0.0)
        rep.upsilon = 2.0;
    else if (mech.has_stable())
        rep.upsilon = mech.stable().theta;
    else
        rep.upsilon = 1.0;  // asymptotically linear (or degenerate)

    // Convexity probed on a lambda grid; psi(0)=0 holds by construction.
    rep.psi_convex = true;
    double prev_slope = -1e300;
    double prev_val = 0.0, prev_lam = 0.0;
    for (double lam = 0.125; lam <= 4096.0; lam *= 2.0) {
        double val = eval_psi(mech, lam);
        double slope = (val - prev_val) / (lam - prev_lam);
        if (slope < prev_slope - 1e-9) rep.psi_convex = false;
        prev_slope = slope;
        prev_val = val;
        prev_lam = lam;
    }

    // Integrability, probed numerically: the partial integrals must form a
    // Cauchy sequence over increasing log segments.
    if (eval_psi(mech, 1.0) <= 0.0) {
        rep.integrable = false;
        msg << "psi degenerate at lambda=1; ";
    } else {
        double total = 0.0;
        double last_piece = 0.0;
        double lo = 0.0;  // log lambda
        bool converged = false;
        auto g = [&](double u) {
            double lam = std::exp(u);
            return lam / eval_psi(mech, lam);
        };
        for (int seg = 0; seg < 24; ++seg) {
            double hi = lo + 2.0;
            last_piece = integrate(g, lo, hi, 1e-9);
            total += last_piece;
            if (last_piece < 1e-9) {
                converged = true;
                break;
            }
            lo = hi;
        }
        rep.tail_integral = total;
        rep.integrable = converged;
        if (!converged) msg << "int dlambda/psi diverges (psi sublinear at infinity); ";
    }

    rep.detail = msg.str();
    return rep;
}

// Mechanism literals: `quadratic` | `stable:1.5:1.0` | `atoms:(1,2),(0.5,3)`.
inline BranchingMechanism parse_psi_literal(const std::string& text) {
    BranchingMechanism mech;
    if (text == "quadratic") {
        mech.beta = 0.5;
        return mech;
    }
    if (text.rfind("stable:", 0) == 0) {
        StablePart s;
        if (std::sscanf(text.c_str(), "stable:%lf:%lf", &s.theta, &s.c) != 2)
            throw ConfigError("bad stable literal: " + text);
        mech.levy_part = s;
        return mech;
    }
    if (text.rfind("atoms:", 0) == 0) {
        AtomsPart part;
        const char* p = text.c_str() + 6;
        while (*p) {
            double x, m;
            int consumed = 0;
            if (std::sscanf(p, " (%lf,%lf)%n", &x, &m, &consumed) != 2)
                throw ConfigError("bad atoms literal: " + text);
            part.atoms.emplace_back(x, m);
            p += consumed;
            if (*p == ',') ++p;
        }
        if (part.atoms.empty()) throw ConfigError("empty atoms literal: " + text);
        mech.levy_part = part;
        return mech;
    }
    throw ConfigError("unknown psi literal: " + text);
}

inline std::string psi_literal(const BranchingMechanism& mech) {
    std::ostringstream out;
    if (mech.has_stable()) {
        out << "stable:" << mech.stable().theta << ":" << mech.stable().c;
    } else if (mech.has_atoms()) {
        out << "atoms:";
        bool first = true;
        for (const auto& [x, m] : mech.atoms().atoms) {
            if (!first) out << ",";
            out << "(" << x << "," << m << ")";
            first = false;
        }
    } else {
        out << "quadratic";
    }
    return out.str();
}

}  // namespace levysnake
