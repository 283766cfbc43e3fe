#pragma once

// Statistical helpers shared by the test suites.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace robit::testing {

/// Asymptotic Kolmogorov survival function Q(λ) = 2 Σ (−1)^{k−1} exp(−2k²λ²).
inline double kolmogorov_sf(double lambda) {
    if (lambda < 1e-3) return 1.0;
    double sum = 0.0;
    for (int k = 1; k <= 200; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += (k % 2 ? 1.0 : -1.0) * term;
        if (term < 1e-18) break;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

/// One-sample KS statistic against a continuous CDF.
inline double ks_statistic(std::vector<double> x, const std::function<double(double)>& cdf) {
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = cdf(x[i]);
        d = std::max({d, (i + 1) / n - f, f - i / n});
    }
    return d;
}

inline double ks_pvalue(std::vector<double> x, const std::function<double(double)>& cdf) {
    const double n = static_cast<double>(x.size());
    const double d = ks_statistic(std::move(x), cdf);
    const double sn = std::sqrt(n);
    return kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d);
}

inline double ks_two_sample_statistic(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double v = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= v) ++i;
        while (j < b.size() && b[j] <= v) ++j;
        d = std::max(d, std::fabs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
    }
    return d;
}

inline double ks_two_sample_pvalue(const std::vector<double>& a, const std::vector<double>& b) {
    const double d = ks_two_sample_statistic(a, b);
    const double ne = static_cast<double>(a.size()) * b.size() / (a.size() + b.size());
    const double sn = std::sqrt(ne);
    return kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d);
}

inline double mean(const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

inline double variance(const std::vector<double>& x) {
    const double m = mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size() - 1);
}

/// Monte-Carlo standard error of the mean by non-overlapping batch means.
inline double batch_means_se(const std::vector<double>& x, std::size_t n_batches = 50) {
    const std::size_t len = x.size() / n_batches;
    std::vector<double> means;
    for (std::size_t b = 0; b < n_batches; ++b) {
        double s = 0.0;
        for (std::size_t t = 0; t < len; ++t) s += x[b * len + t];
        means.push_back(s / static_cast<double>(len));
    }
    return std::sqrt(variance(means) / static_cast<double>(n_batches));
}

} // namespace robit::testing
