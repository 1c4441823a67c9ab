#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

namespace levysnake::stats {

// Simple summary statistics (min, max, mean, variance) with an on-line
// update. Variance is the sample variance (denominator n-1).
struct Summary {
    std::size_t n = 0;
    double min = std::numeric_limits<double>::infinity();
    double max = -std::numeric_limits<double>::infinity();
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) {
        if (x < min) min = x;
        if (x > max) max = x;
        ++n;
        double d1 = x - mean;
        mean += d1 / static_cast<double>(n);
        m2 += d1 * (x - mean);
    }
    double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
    double stderr_mean() const {
        return n > 1 ? std::sqrt(variance() / static_cast<double>(n)) : 0.0;
    }
};

template <typename Seq>
Summary summarize(const Seq& xs) {
    Summary s;
    for (double x : xs) s.add(x);
    return s;
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// P(sup|B_KS| <= x), the asymptotic Kolmogorov distribution.
inline double kolmogorov_cdf(double x) {
    if (x < 0.05) return 0.0;
    if (x > 5.0) return 1.0;
    double s = 0.0;
    for (int k = 1; k <= 100; ++k) {
        double term = std::exp(-2.0 * k * k * x * x);
        s += (k % 2 == 1 ? term : -term);
        if (term < 1e-12) break;
    }
    return 1.0 - 2.0 * s;
}

// One-sample KS against a cdf supplied as a callable.
inline double ks_statistic(std::vector<double> xs,
                           const std::function<double(double)>& cdf) {
    std::sort(xs.begin(), xs.end());
    double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double f = cdf(xs[i]);
        d = std::max(d, std::abs(f - static_cast<double>(i) / n));
        d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
    }
    return d;
}

inline double ks_pvalue(double d, double n_eff) {
    return 1.0 - kolmogorov_cdf(d * (std::sqrt(n_eff) + 0.12 + 0.11 / std::sqrt(n_eff)));
}

inline double ks_test(std::vector<double> xs,
                      const std::function<double(double)>& cdf) {
    double n = static_cast<double>(xs.size());
    return ks_pvalue(ks_statistic(std::move(xs), cdf), n);
}

// Two-sample KS p-value.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        if (a[i] <= b[j]) ++i; else ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na -
                                 static_cast<double>(j) / nb));
    }
    double n_eff = na * nb / (na + nb);
    return ks_pvalue(d, n_eff);
}

// Index of dispersion (variance / mean) of count data; ~1 under Poisson.
template <typename Seq>
double dispersion_index(const Seq& counts) {
    Summary s = summarize(counts);
    return s.mean > 0.0 ? s.variance() / s.mean : 0.0;
}

// Two-sided p-value of the dispersion test: (n-1)*D ~ chi2(n-1) under the
// Poisson null. Uses the Wilson-Hilferty normal approximation of chi2.
inline double dispersion_pvalue(double index, std::size_t n) {
    if (n < 2) return 1.0;
    double k = static_cast<double>(n - 1);
    double x = k * index;
    double z = (std::cbrt(x / k) - (1.0 - 2.0 / (9.0 * k))) / std::sqrt(2.0 / (9.0 * k));
    double p_hi = 1.0 - normal_cdf(z);
    return 2.0 * std::min(p_hi, 1.0 - p_hi);
}

// Two-sided z-test that two estimates with given standard errors agree.
inline double z_test(double a, double se_a, double b, double se_b) {
    double se = std::sqrt(se_a * se_a + se_b * se_b);
    if (se == 0.0) return a == b ? 1.0 : 0.0;
    double z = std::abs(a - b) / se;
    return 2.0 * (1.0 - normal_cdf(z));
}

}  // namespace levysnake::stats
