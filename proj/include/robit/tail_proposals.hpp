#pragma once

// Gamma proposals matched to the mode and curvature of the nonstandard full
// conditionals of the DOF parameter ν and of the per-dimension scales q, and
// the Metropolised-Independence acceptance rule.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>

#include "robit/error.hpp"
#include "robit/special_functions.hpp"

namespace robit {

/// ν's conditional cannot be mode-matched on the search interval.
class ModeNotFound : public NumericalError {
public:
    using NumericalError::NumericalError;
};

struct GammaProposal {
    double alpha_star = 1.0;
    double beta_star = 1.0;

    /// Unnormalized log density (α*−1) log x − β* x.
    double log_density(double x) const { return (alpha_star - 1.0) * std::log(x) - beta_star * x; }
};

// ---------------------------------------------------------------------------
// ν

inline constexpr double kNuSearchLower = 0.05;
inline constexpr double kNuSearchUpper = 500.0;

struct NuTargetParams {
    double n = 0.0;  ///< number of scales contributing
    double xi = 0.0; ///< β₀ + ½Σq − ½Σlog q
    double alpha0 = 2.0;

    NuTargetParams() = default;
    NuTargetParams(double n_, double xi_, double alpha0_) : n(n_), xi(xi_), alpha0(alpha0_) {
        detail::require(n >= 0.0 && std::isfinite(xi) && alpha0 > 0.0, "NuTargetParams: invalid parameters");
    }

    /// Conditional of ν given scales q, each q ~ Gamma(ν/2, ν/2), under a
    /// Gamma(α₀, β₀) prior.
    template <class Range>
    static NuTargetParams from_scales(const Range& q, double alpha0, double beta0) {
        double n = 0.0, sum = 0.0, sum_log = 0.0;
        for (double v : q) {
            detail::require(v > 0.0 && std::isfinite(v), "NuTargetParams: scales must be positive");
            n += 1.0;
            sum += v;
            sum_log += std::log(v);
        }
        return {n, beta0 + 0.5 * sum - 0.5 * sum_log, alpha0};
    }
};

/// l(ν) = (Nν/2) log(ν/2) − N log Γ(ν/2) + (α₀ − 1) log ν − ξν.
inline double nu_log_target(double nu, const NuTargetParams& p) {
    detail::require(nu > 0.0, "nu_log_target: nu must be positive");
    if (std::isinf(nu)) return -std::numeric_limits<double>::infinity();
    double value = (p.alpha0 - 1.0) * std::log(nu) - p.xi * nu;
    if (p.n > 0.0) value += p.n * (0.5 * nu * std::log(0.5 * nu) - log_gamma_fn(0.5 * nu));
    return value;
}

/// l'(ν) = (N/2)[log(ν/2) + 1 − ψ(ν/2)] + (α₀ − 1)/ν − ξ.
inline double nu_log_target_d1(double nu, const NuTargetParams& p) {
    detail::require(nu > 0.0, "nu_log_target_d1: nu must be positive");
    double value = (p.alpha0 - 1.0) / nu - p.xi;
    if (p.n > 0.0) value += 0.5 * p.n * (std::log(0.5 * nu) + 1.0 - digamma(0.5 * nu));
    return value;
}

/// l''(ν) = (N/2)[1/ν − ½ψ'(ν/2)] − (α₀ − 1)/ν².
inline double nu_log_target_d2(double nu, const NuTargetParams& p) {
    detail::require(nu > 0.0, "nu_log_target_d2: nu must be positive");
    double value = -(p.alpha0 - 1.0) / (nu * nu);
    if (p.n > 0.0) value += 0.5 * p.n * (1.0 / nu - 0.5 * trigamma(0.5 * nu));
    return value;
}

struct NuProposal {
    GammaProposal proposal;
    double mode = 0.0;
    int iterations = 0;
    bool at_boundary = false;
};

namespace detail {

inline GammaProposal matched_gamma(double mode, double curvature) {
    if (!(curvature < 0.0) || !std::isfinite(curvature))
        throw NumericalError("tail proposal: curvature at the mode is not negative and finite");
    return {1.0 - mode * mode * curvature, -mode * curvature};
}

} // namespace detail

/// Locates the maximizer of l on [0.05, 500] and matches a Gamma proposal to
/// its mode and curvature.
///
/// Safeguarded Newton on l': each step is clamped to [ν/2, 2ν] and falls back
/// to bisection when it leaves the current sign-change bracket. When l' keeps
/// one sign over the interval the maximizer is the endpoint l increases
/// toward, reported with at_boundary set. Throws ModeNotFound when the
/// curvature at the located point is not negative, so no Gamma can match it.
inline NuProposal build_nu_proposal(const NuTargetParams& p, double start = 0.0) {
    double lo = kNuSearchLower, hi = kNuSearchUpper;
    const double g_lo = nu_log_target_d1(lo, p);
    const double g_hi = nu_log_target_d1(hi, p);
    NuProposal out;
    double nu;
    if (!(g_lo > 0.0)) {
        nu = lo;
        out.at_boundary = true;
    } else if (!(g_hi < 0.0)) {
        nu = hi;
        out.at_boundary = true;
    } else {
        nu = (start > lo && start < hi) ? start : std::sqrt(lo * hi);
        for (int it = 1; it <= 100; ++it) {
            out.iterations = it;
            const double g = nu_log_target_d1(nu, p);
            if (std::fabs(g) < 1e-13) break;
            if (g > 0.0)
                lo = nu;
            else
                hi = nu;
            if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * nu) break;
            const double h = nu_log_target_d2(nu, p);
            double next = std::numeric_limits<double>::quiet_NaN();
            if (h < 0.0) next = std::clamp(nu - g / h, 0.5 * nu, 2.0 * nu);
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
            nu = next;
        }
    }
    const double curvature = nu_log_target_d2(nu, p);
    if (!(curvature < 0.0) || !std::isfinite(curvature))
        throw ModeNotFound("nu proposal: curvature " + std::to_string(curvature) + " at " + std::to_string(nu) +
                           " is not negative");
    out.mode = nu;
    out.proposal = detail::matched_gamma(nu, curvature);
    return out;
}

/// Fallback when no proposal can be matched and no earlier one exists:
/// an exponential with mean at the interval end l increases toward.
inline GammaProposal boundary_nu_proposal(const NuTargetParams& p) {
    const double edge = nu_log_target_d1(kNuSearchLower, p) <= 0.0 ? kNuSearchLower : kNuSearchUpper;
    return {1.0, 1.0 / edge};
}

// ---------------------------------------------------------------------------
// q

/// Conditional of one scale q given everything else, for a block of `dim`
/// latent dimensions sharing q:
/// f(q) = −qu/2 − √q·c + ((ν + dim − 2)/2) log q.
/// With dim = 1, u = ν + (Σ⁻¹)_jj z_j² and c = z_j Σ_{k≠j} √q_k (Σ⁻¹)_jk z_k.
struct QTargetParams {
    double u = 1.0;
    double c = 0.0;
    double nu = 1.0;
    int dim = 1;

    QTargetParams() = default;
    QTargetParams(double u_, double c_, double nu_, int dim_ = 1) : u(u_), c(c_), nu(nu_), dim(dim_) {
        detail::require(u > 0.0 && std::isfinite(u) && std::isfinite(c), "QTargetParams: u must be positive");
        detail::require(nu > 0.0 && dim >= 1, "QTargetParams: nu must be positive");
        detail::require(u >= nu * (1.0 - 1e-12), "QTargetParams: u must be at least nu");
    }

    /// Twice the exponent of log q.
    double shape_term() const { return nu + dim - 2.0; }
};

inline double q_log_target(double q, const QTargetParams& p) {
    detail::require(q > 0.0, "q_log_target: q must be positive");
    return -0.5 * q * p.u - std::sqrt(q) * p.c + 0.5 * p.shape_term() * std::log(q);
}

inline double q_log_target_d1(double q, const QTargetParams& p) {
    return -0.5 * p.u - 0.5 * p.c / std::sqrt(q) + 0.5 * p.shape_term() / q;
}

inline double q_log_target_d2(double q, const QTargetParams& p) {
    return 0.25 * p.c / (q * std::sqrt(q)) - 0.5 * p.shape_term() / (q * q);
}

/// m* = ((c/2 + √((c/2)² + u k)) / k)^(−2) with k = ν + dim − 2 > 0.
inline double q_mode(const QTargetParams& p) {
    const double k = p.shape_term();
    if (!(k > 0.0)) throw NumericalError("q_mode: mode undefined for nu + dim - 2 <= 0");
    const double h = 0.5 * p.c;
    // Root s = √m of u s² + c s − k = 0, in the form that avoids cancellation.
    const double s = h >= 0.0 ? k / (h + std::sqrt(h * h + p.u * k)) : (std::sqrt(h * h + p.u * k) - h) / p.u;
    return s * s;
}

inline GammaProposal build_q_proposal(const QTargetParams& p) {
    if (!(p.shape_term() > 0.0)) return {1.0, 0.5 * p.u};
    const double m = q_mode(p);
    return detail::matched_gamma(m, q_log_target_d2(m, p));
}

// ---------------------------------------------------------------------------

/// Metropolised-Independence acceptance.
inline bool mh_accept(double log_f_new, double log_g_new, double log_f_old, double log_g_old,
                      double uniform_draw) {
    if (std::isnan(log_f_new) || std::isnan(log_g_new) || std::isnan(log_f_old) || std::isnan(log_g_old) ||
        std::isnan(uniform_draw))
        throw NumericalError("mh_accept: NaN input");
    const double ratio = (log_f_new - log_g_new) - (log_f_old - log_g_old);
    if (std::isnan(ratio)) {
        // −∞ − (−∞): the proposed point has zero target mass.
        if (log_f_new == -std::numeric_limits<double>::infinity()) return false;
        throw NumericalError("mh_accept: undefined log ratio");
    }
    return uniform_draw < std::exp(std::min(0.0, ratio));
}

} // namespace robit
