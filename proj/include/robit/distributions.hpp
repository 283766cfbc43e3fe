#pragma once

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "robit/error.hpp"
#include "robit/rng.hpp"
#include "robit/special_functions.hpp"

namespace robit {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Symmetric positive-definite matrix with its lower Cholesky factor.
///
/// Construction checks symmetry to 1e-12 relative to the largest entry and
/// that the factorization succeeds; the stored matrix is exactly symmetric.
class SpdMatrix {
public:
    explicit SpdMatrix(const Matrix& m) : matrix_(m) {
        detail::require(m.rows() > 0 && m.rows() == m.cols(), "SpdMatrix: matrix must be square and non-empty");
        detail::require(m.allFinite(), "SpdMatrix: non-finite entries");
        const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
        detail::require((m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale,
                        "SpdMatrix: matrix is not symmetric");
        matrix_ = 0.5 * (m + m.transpose());
        Eigen::LLT<Matrix> llt(matrix_);
        detail::require(llt.info() == Eigen::Success, "SpdMatrix: Cholesky factorization failed");
        lower_ = llt.matrixL();
    }

    static SpdMatrix identity(Eigen::Index dim) { return SpdMatrix(Matrix::Identity(dim, dim)); }

    Eigen::Index dim() const noexcept { return matrix_.rows(); }
    const Matrix& matrix() const noexcept { return matrix_; }
    /// Lower-triangular L with L Lᵀ = matrix().
    const Matrix& cholesky() const noexcept { return lower_; }

    Matrix inverse() const {
        Matrix inv = Matrix::Identity(dim(), dim());
        lower_.triangularView<Eigen::Lower>().solveInPlace(inv);
        lower_.triangularView<Eigen::Lower>().transpose().solveInPlace(inv);
        return 0.5 * (inv + inv.transpose());
    }

private:
    Matrix matrix_;
    Matrix lower_;
};

namespace detail {

inline constexpr double kInverseCdfMassFloor = 1e-10;

// Right-tail draw from N(0,1) restricted to [a, b] with a >= 0 and tiny mass.
inline double right_tail_normal(double a, double b, RngStream& rng) {
    if (std::isfinite(b) && (b - a) * a < 1.0) {
        // Narrow window: uniform proposal, acceptance ≥ exp(-(b-a)(b+a)/2) ≥ e^-1.5.
        for (;;) {
            const double x = a + (b - a) * rng.uniform();
            if (rng.uniform() <= std::exp(-0.5 * (x - a) * (x + a))) return x;
        }
    }
    // Exponential proposal with the optimal rate for the one-sided tail.
    const double lambda = 0.5 * (a + std::sqrt(a * a + 4.0));
    const double span = std::isfinite(b) ? -std::expm1(-lambda * (b - a)) : 1.0;
    for (;;) {
        const double x = a - std::log1p(-span * rng.uniform()) / lambda;
        if (x > b) continue;
        const double d = x - lambda;
        if (rng.uniform() <= std::exp(-0.5 * d * d)) return x;
    }
}

/// N(0,1) truncated to [a, b]. No argument checking; a < b assumed.
inline double truncated_standard_normal(double a, double b, RngStream& rng) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    // One-sided windows: plain rejection when they hold at least half the
    // mass, otherwise the exponential tail sampler.
    if (b == inf) {
        if (a > 0.0) return right_tail_normal(a, inf, rng);
        for (;;) {
            const double x = rng.normal();
            if (x >= a) return x;
        }
    }
    if (a == -inf) {
        if (b < 0.0) return -right_tail_normal(-b, inf, rng);
        for (;;) {
            const double x = rng.normal();
            if (x <= b) return x;
        }
    }
    double x;
    if (a >= 0.0) {
        const double sa = normal_sf(a);
        const double sb = normal_sf(b);
        if (sa - sb >= kInverseCdfMassFloor) {
            x = -normal_quantile(sb + rng.uniform() * (sa - sb));
        } else {
            x = right_tail_normal(a, b, rng);
        }
    } else if (b <= 0.0) {
        const double ca = normal_cdf(a);
        const double cb = normal_cdf(b);
        if (cb - ca >= kInverseCdfMassFloor) {
            x = normal_quantile(ca + rng.uniform() * (cb - ca));
        } else {
            x = -right_tail_normal(-b, -a, rng);
        }
    } else {
        const double ca = normal_cdf(a);
        const double cb = normal_cdf(b);
        if (cb - ca >= kInverseCdfMassFloor) {
            x = normal_quantile(ca + rng.uniform() * (cb - ca));
        } else {
            // Only reachable for a window narrower than ~1e-10 around zero.
            for (;;) {
                x = a + (b - a) * rng.uniform();
                if (rng.uniform() <= std::exp(-0.5 * x * x)) break;
            }
        }
    }
    return std::min(std::max(x, a), b);
}

/// Gamma(shape, 1) by Marsaglia & Tsang; boosted for shape < 1.
inline double standard_gamma(double shape, RngStream& rng) {
    if (shape < 1.0) {
        const double g = standard_gamma(shape + 1.0, rng);
        const double x = g * std::exp(std::log(rng.uniform()) / shape);
        return x > 0.0 ? x : std::numeric_limits<double>::min();
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = rng.normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = rng.uniform();
        const double x2 = x * x;
        if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
        if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
    }
}

} // namespace detail

/// Draw from N(mu, sigma2) restricted to [lower, upper]. Infinite bounds allowed.
///
/// Inverse-CDF sampling when the window carries at least 1e-10 of the
/// untruncated mass; otherwise an exponential-proposal rejection sampler that
/// stays exact arbitrarily far into the tails. The result always lies in
/// [lower, upper].
inline double sample_truncated_normal(double mu, double sigma2, double lower, double upper,
                                      RngStream& rng) {
    detail::require(std::isfinite(mu), "sample_truncated_normal: mu must be finite");
    detail::require(sigma2 > 0.0 && std::isfinite(sigma2), "sample_truncated_normal: sigma2 must be positive");
    detail::require(!std::isnan(lower) && !std::isnan(upper) && lower < upper,
                    "sample_truncated_normal: require lower < upper");
    const double sigma = std::sqrt(sigma2);
    const double a = (lower - mu) / sigma;
    const double b = (upper - mu) / sigma;
    const double x = mu + sigma * detail::truncated_standard_normal(a, b, rng);
    return std::min(std::max(x, lower), upper);
}

/// Gamma with shape/rate parameterization; mean shape / rate.
inline double sample_gamma(double shape, double rate, RngStream& rng) {
    detail::require(shape > 0.0 && std::isfinite(shape), "sample_gamma: shape must be positive");
    detail::require(rate > 0.0 && std::isfinite(rate), "sample_gamma: rate must be positive");
    const double x = detail::standard_gamma(shape, rng) / rate;
    return x > 0.0 ? x : std::numeric_limits<double>::min();
}

/// χ²_ν / ν, i.e. Gamma(ν/2, rate ν/2): the latent scale of a t kernel.
inline double sample_scaled_chi2(double nu, RngStream& rng) {
    detail::require(nu > 0.0 && std::isfinite(nu), "sample_scaled_chi2: nu must be positive");
    return sample_gamma(0.5 * nu, 0.5 * nu, rng);
}

inline Vector sample_mvn(const Vector& mean, const SpdMatrix& cov, RngStream& rng) {
    detail::require(mean.size() == cov.dim(), "sample_mvn: dimension mismatch");
    Vector z(mean.size());
    for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = rng.normal();
    return mean + cov.cholesky().triangularView<Eigen::Lower>() * z;
}

/// Inverse-Wishart IW(df, scale) with E[X] = scale / (df - d - 1).
///
/// Bartlett decomposition of W ~ Wishart(df, scale⁻¹): with scale = C Cᵀ and
/// A lower triangular (A_ii² ~ χ²_{df-i}, A_ij ~ N(0,1) for i > j),
/// W = C⁻ᵀ A Aᵀ C⁻¹, so X = W⁻¹ = (C A⁻ᵀ)(C A⁻ᵀ)ᵀ.
inline SpdMatrix sample_inverse_wishart(double df, const SpdMatrix& scale, RngStream& rng) {
    const Eigen::Index d = scale.dim();
    detail::require(std::isfinite(df) && df > static_cast<double>(d - 1),
                    "sample_inverse_wishart: df must exceed dimension - 1");
    Matrix a = Matrix::Zero(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        a(i, i) = std::sqrt(2.0 * detail::standard_gamma(0.5 * (df - static_cast<double>(i)), rng));
        for (Eigen::Index j = 0; j < i; ++j) a(i, j) = rng.normal();
    }
    // B = C A⁻ᵀ  <=>  B Aᵀ = C, solved as A Bᵀ = Cᵀ.
    Matrix bt = scale.cholesky().transpose();
    a.triangularView<Eigen::Lower>().solveInPlace(bt);
    Matrix x = bt.transpose() * bt;
    x = 0.5 * (x + x.transpose());
    if (!x.allFinite()) throw NumericalError("sample_inverse_wishart: non-finite draw");
    try {
        return SpdMatrix(x);
    } catch (const InvalidArgument&) {
        throw NumericalError("sample_inverse_wishart: draw is not positive definite");
    }
}

} // namespace robit
