#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "robit/error.hpp"
#include "robit/model.hpp"

namespace robit {

/// Retained draws: one row per retained iteration, one column per named parameter.
struct PosteriorDraws {
    std::vector<std::string> names;
    std::vector<RowMatrix> chains;
    std::vector<std::vector<std::size_t>> iterations;  ///< 1-based sweep index of each row

    std::size_t n_chains() const { return chains.size(); }
    std::size_t n_params() const { return names.size(); }
    std::size_t n_retained() const { return chains.empty() ? 0 : static_cast<std::size_t>(chains[0].rows()); }
    std::size_t n_total() const {
        std::size_t n = 0;
        for (const auto& c : chains) n += static_cast<std::size_t>(c.rows());
        return n;
    }

    std::optional<std::size_t> index_of(const std::string& name) const {
        auto it = std::find(names.begin(), names.end(), name);
        if (it == names.end()) return std::nullopt;
        return static_cast<std::size_t>(it - names.begin());
    }

    std::size_t require_index(const std::string& name) const {
        auto k = index_of(name);
        if (!k) throw InvalidArgument("parameter '" + name + "' not present in draws");
        return *k;
    }

    /// All draws of parameter k, chains concatenated in order.
    std::vector<double> pooled(std::size_t k) const {
        std::vector<double> out;
        out.reserve(n_total());
        for (const auto& c : chains)
            for (Eigen::Index r = 0; r < c.rows(); ++r) out.push_back(c(r, static_cast<Eigen::Index>(k)));
        return out;
    }

    /// Rows of all chains stacked, chain by chain.
    RowMatrix stacked() const {
        RowMatrix out(static_cast<Eigen::Index>(n_total()), static_cast<Eigen::Index>(n_params()));
        Eigen::Index r = 0;
        for (const auto& c : chains) {
            out.middleRows(r, c.rows()) = c;
            r += c.rows();
        }
        return out;
    }

    void validate() const {
        detail::require(!chains.empty(), "PosteriorDraws: no chains");
        auto sorted = names;
        std::sort(sorted.begin(), sorted.end());
        detail::require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(),
                        "PosteriorDraws: duplicate parameter names");
        for (const auto& c : chains) {
            detail::require(c.rows() == chains[0].rows(), "PosteriorDraws: chains differ in retained count");
            detail::require(static_cast<std::size_t>(c.cols()) == names.size(),
                            "PosteriorDraws: column count does not match names");
        }
    }
};

struct SummaryRow {
    std::string name;
    double mean = 0.0;
    double sd = 0.0;
    double q025 = 0.0;
    double q975 = 0.0;
};

struct SummaryTable {
    std::vector<SummaryRow> rows;

    const SummaryRow& at(const std::string& name) const {
        for (const auto& r : rows)
            if (r.name == name) return r;
        throw InvalidArgument("summary has no parameter '" + name + "'");
    }
};

/// Empirical quantile of sorted values by linear interpolation between order
/// statistics: position (n − 1)·p.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
    detail::require(!sorted.empty(), "quantile: empty sample");
    detail::require(p >= 0.0 && p <= 1.0, "quantile: p outside [0, 1]");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Mean, sample SD and 2.5/97.5% quantiles of a sample. Sums run over the
/// sorted values so the result does not depend on input order.
inline SummaryRow summarize_sample(std::vector<double> values, std::string name = {}) {
    detail::require(values.size() >= 2, "summarize: need at least two draws");
    std::sort(values.begin(), values.end());
    SummaryRow row;
    row.name = std::move(name);
    double sum = 0.0;
    for (double v : values) sum += v;
    row.mean = sum / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - row.mean) * (v - row.mean);
    row.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    row.q025 = quantile_sorted(values, 0.025);
    row.q975 = quantile_sorted(values, 0.975);
    return row;
}

/// Per-parameter summaries pooled across chains.
inline SummaryTable summarize(const PosteriorDraws& draws) {
    detail::require(draws.n_chains() > 0 && draws.n_total() > 0, "summarize: empty draws");
    detail::require(draws.n_total() >= 2, "summarize: need at least two draws");
    SummaryTable table;
    for (std::size_t k = 0; k < draws.n_params(); ++k)
        table.rows.push_back(summarize_sample(draws.pooled(k), draws.names[k]));
    return table;
}

/// Split-R̂ of one parameter. Each chain is split into halves (the middle draw
/// of an odd-length chain is dropped). B is n times the variance of the
/// half-chain means with divisor m, so duplicated chains leave R̂ unchanged;
/// zero within- and between-variance gives 1.
inline double split_rhat(const std::vector<std::vector<double>>& chains) {
    detail::require(!chains.empty(), "psrf: no chains");
    const std::size_t len = chains[0].size();
    for (const auto& c : chains) detail::require(c.size() == len, "psrf: chains differ in length");
    detail::require(len >= 4, "psrf: need at least 4 retained draws per chain");
    const std::size_t n = len / 2;
    std::vector<double> means, vars;
    for (const auto& c : chains) {
        for (std::size_t half = 0; half < 2; ++half) {
            const std::size_t start = half == 0 ? 0 : len - n;
            double s = 0.0;
            for (std::size_t t = 0; t < n; ++t) s += c[start + t];
            const double mean = s / static_cast<double>(n);
            double ss = 0.0;
            for (std::size_t t = 0; t < n; ++t) ss += (c[start + t] - mean) * (c[start + t] - mean);
            means.push_back(mean);
            vars.push_back(ss / static_cast<double>(n - 1));
        }
    }
    const double m = static_cast<double>(means.size());
    double grand = 0.0, W = 0.0;
    for (std::size_t k = 0; k < means.size(); ++k) {
        grand += means[k];
        W += vars[k];
    }
    grand /= m;
    W /= m;
    double B = 0.0;
    for (double mu : means) B += (mu - grand) * (mu - grand);
    B *= static_cast<double>(n) / m;
    const double nn = static_cast<double>(n);
    if (W <= 0.0) return B <= 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    return std::sqrt(((nn - 1.0) / nn * W + B / nn) / W);
}

inline std::vector<double> psrf(const PosteriorDraws& draws) {
    detail::require(draws.n_chains() > 0, "psrf: no chains");
    std::vector<double> out;
    for (std::size_t k = 0; k < draws.n_params(); ++k) {
        std::vector<std::vector<double>> per_chain;
        for (const auto& c : draws.chains) {
            std::vector<double> v(static_cast<std::size_t>(c.rows()));
            for (Eigen::Index r = 0; r < c.rows(); ++r) v[static_cast<std::size_t>(r)] = c(r, static_cast<Eigen::Index>(k));
            per_chain.push_back(std::move(v));
        }
        out.push_back(split_rhat(per_chain));
    }
    return out;
}

struct WtpResult {
    double ratio_of_means = 0.0;
    SummaryRow per_draw;
    std::optional<std::string> warning;
};

/// Willingness to pay: numerator coefficient over cost coefficient. The
/// ratio of posterior means is the reported figure; the per-draw ratio
/// distribution is summarized alongside.
inline WtpResult wtp(const PosteriorDraws& draws, const std::string& numerator, const std::string& cost) {
    const auto a = draws.pooled(draws.require_index(numerator));
    const auto b = draws.pooled(draws.require_index(cost));
    detail::require(a.size() >= 2, "wtp: need at least two draws");
    WtpResult r;
    double sa = 0.0, sb = 0.0;
    std::size_t pos = 0, neg = 0;
    std::vector<double> ratio(a.size());
    for (std::size_t t = 0; t < a.size(); ++t) {
        sa += a[t];
        sb += b[t];
        pos += b[t] > 0.0;
        neg += b[t] < 0.0;
        ratio[t] = a[t] / b[t];
    }
    r.ratio_of_means = sa / sb;
    if (pos + neg < b.size() || (pos > 0 && neg > 0))
        r.warning = "cost coefficient draws are not bounded away from zero in sign (" + std::to_string(pos) +
                    " positive, " + std::to_string(neg) + " negative of " + std::to_string(b.size()) + ")";
    r.per_draw = summarize_sample(std::move(ratio), numerator + "/" + cost);
    return r;
}

} // namespace robit
