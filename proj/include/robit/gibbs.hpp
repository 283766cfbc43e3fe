#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <Eigen/Cholesky>

#include "robit/distributions.hpp"
#include "robit/error.hpp"
#include "robit/model.hpp"
#include "robit/posterior.hpp"
#include "robit/rng.hpp"
#include "robit/tail_proposals.hpp"

namespace robit {

/// How the Σ-update restores the trace restriction.
enum class SigmaUpdate {
    /// Working scale drawn from its prior, IW proposal, β-prior correction.
    /// Leaves the identified posterior invariant.
    ScaleAugmented,
    /// IW draw given the identified residuals, then (w, β, Σ̃) rescaled by α.
    /// Not invariant for small N; kept for reproducing the printed algorithm.
    Printed,
};

inline std::string_view to_string(SigmaUpdate u) { return u == SigmaUpdate::Printed ? "printed" : "scale-augmented"; }

inline SigmaUpdate parse_sigma_update(std::string_view name) {
    if (name == "printed") return SigmaUpdate::Printed;
    if (name == "scale-augmented") return SigmaUpdate::ScaleAugmented;
    throw InvalidArgument("unknown sigma update '" + std::string(name) + "' (valid: scale-augmented, printed)");
}

struct ChainConfig {
    std::size_t total_iterations = 300000;
    std::size_t warmup = 200000;
    std::size_t thin = 10;
    std::size_t n_chains = 1;
    std::uint64_t seed = 1;
    /// Starting value of every ν.
    double init_nu = 10.0;
    /// Hold every ν at this value instead of sampling it.
    std::optional<double> fix_nu;
    /// Keep all latent scales at 1 (no q-step).
    bool freeze_q = false;
    /// Check choice consistency and the trace restriction after every sweep.
    bool check_invariants = false;
    SigmaUpdate sigma_update = SigmaUpdate::ScaleAugmented;

    void validate() const {
        detail::require(total_iterations > 0, "ChainConfig: total_iterations must be positive");
        detail::require(warmup < total_iterations, "ChainConfig: warmup must be below total_iterations");
        detail::require(thin > 0, "ChainConfig: thin must be positive");
        detail::require(n_chains > 0, "ChainConfig: n_chains must be positive");
        detail::require(init_nu > 0.0, "ChainConfig: init_nu must be positive");
        detail::require(!fix_nu || *fix_nu > 0.0, "ChainConfig: fixed nu must be positive");
    }

    std::size_t retained() const { return (total_iterations - warmup) / thin; }
    bool retains(std::size_t iteration) const {
        return iteration > warmup && (iteration - warmup) % thin == 0;
    }
};

struct SamplerTelemetry {
    std::vector<std::size_t> nu_accepted;
    std::vector<std::size_t> nu_attempted;
    std::size_t q_accepted = 0;
    std::size_t q_attempted = 0;
    std::size_t nu_mode_not_found = 0;
    std::size_t nu_mode_at_boundary = 0;
    std::size_t sigma_accepted = 0;
    std::size_t sigma_attempted = 0;
    std::size_t jitter_events = 0;
    double wall_time = 0.0;

    std::vector<double> mh_accept_rate_nu() const {
        std::vector<double> r;
        for (std::size_t s = 0; s < nu_attempted.size(); ++s)
            r.push_back(nu_attempted[s] ? static_cast<double>(nu_accepted[s]) / nu_attempted[s]
                                        : std::numeric_limits<double>::quiet_NaN());
        return r;
    }
    double mh_accept_rate_q() const {
        return q_attempted ? static_cast<double>(q_accepted) / q_attempted : std::numeric_limits<double>::quiet_NaN();
    }
    double accept_rate_sigma() const {
        return sigma_attempted ? static_cast<double>(sigma_accepted) / sigma_attempted
                               : std::numeric_limits<double>::quiet_NaN();
    }
};

/// Proposal state carried across ν-updates.
struct NuProposalMemory {
    std::vector<std::optional<GammaProposal>> previous;
    std::vector<double> last_mode;
};

namespace detail {

/// Precision of Σ with the per-coordinate conditioning coefficients.
struct Conditioning {
    std::size_t D = 0;
    std::vector<double> P;      ///< row-major Σ⁻¹
    std::vector<double> ratio;  ///< P_jk / P_jj
    std::vector<double> var;    ///< 1 / P_jj
};

inline Matrix precision_of(const Matrix& Sigma, SamplerTelemetry* telemetry) {
    const auto D = Sigma.rows();
    Eigen::LLT<Matrix> llt(Sigma);
    if (llt.info() != Eigen::Success) {
        llt.compute(Sigma + 1e-10 * Matrix::Identity(D, D));
        if (telemetry) ++telemetry->jitter_events;
        if (llt.info() != Eigen::Success) throw NumericalError("Sigma is not positive definite after jitter");
    }
    Matrix P = llt.solve(Matrix::Identity(D, D));
    return 0.5 * (P + P.transpose());
}

inline Conditioning conditioning(const Matrix& Sigma, SamplerTelemetry* telemetry) {
    Conditioning c;
    c.D = static_cast<std::size_t>(Sigma.rows());
    const Matrix P = precision_of(Sigma, telemetry);
    c.P.resize(c.D * c.D);
    c.ratio.resize(c.D * c.D);
    c.var.resize(c.D);
    for (std::size_t j = 0; j < c.D; ++j) {
        const double pjj = P(j, j);
        if (!(pjj > 0.0) || !std::isfinite(pjj))
            throw NumericalError("singular conditional covariance for coordinate " + std::to_string(j));
        c.var[j] = 1.0 / pjj;
        for (std::size_t k = 0; k < c.D; ++k) {
            c.P[j * c.D + k] = P(j, k);
            c.ratio[j * c.D + k] = P(j, k) / pjj;
        }
    }
    return c;
}

/// out = X_i β for the (J−1) x K block at x.
inline void design_times(const double* x, const double* beta, std::size_t D, std::size_t K, double* out) {
    for (std::size_t r = 0; r < D; ++r) {
        double s = 0.0;
        for (std::size_t k = 0; k < K; ++k) s += x[r * K + k] * beta[k];
        out[r] = s;
    }
}

/// Truncation window of w_ij given the other coordinates and the choice code.
inline std::pair<double, double> latent_bounds(int code, std::size_t j, const double* w, std::size_t D) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    if (code == static_cast<int>(D)) return {-inf, 0.0};
    if (code == static_cast<int>(j)) {
        double lower = 0.0;
        for (std::size_t k = 0; k < D; ++k)
            if (k != j && w[k] > lower) lower = w[k];
        return {lower, inf};
    }
    return {-inf, std::max(0.0, w[code])};
}

// Keeps a drawn coordinate strictly inside the region where the choice rule
// (lowest-index tie break) reproduces the observed choice.
inline double respect_choice(double x, int code, std::size_t j, std::size_t D, double lower, double upper) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    if (code == static_cast<int>(j)) return x <= lower ? std::nextafter(lower, inf) : x;
    if (code == static_cast<int>(D)) return x >= 0.0 ? std::nextafter(0.0, -inf) : x;
    return x >= upper ? std::nextafter(upper, -inf) : x;
}

} // namespace detail

struct LatentConditional {
    double mean = 0.0;
    double variance = 0.0;
    double lower = 0.0;
    double upper = 0.0;
};

/// Full conditional of w_ij (mean, variance and truncation window).
inline LatentConditional latent_conditional(const ParameterState& state, const ChoiceDataset& data,
                                            const ModelSpec& spec, std::size_t i, std::size_t j) {
    const std::size_t D = data.n_dim(), K = data.n_coef;
    detail::require(i < data.n_obs && j < D, "latent_conditional: index out of range");
    const auto cond = detail::conditioning(state.Sigma, nullptr);
    const auto group = spec.group_of_dim(D);
    std::vector<double> xb(D), sq(D);
    detail::design_times(data.design_ptr(i), state.beta.data(), D, K, xb.data());
    for (std::size_t k = 0; k < D; ++k) sq[k] = std::sqrt(state.q(i, group[k]));
    double acc = 0.0;
    for (std::size_t k = 0; k < D; ++k)
        if (k != j) acc += cond.ratio[j * D + k] * sq[k] * (state.w(i, k) - xb[k]);
    LatentConditional out;
    out.mean = xb[j] - acc / sq[j];
    out.variance = cond.var[j] / (sq[j] * sq[j]);
    std::tie(out.lower, out.upper) = detail::latent_bounds(data.code[i], j, &state.w(i, 0), D);
    return out;
}

/// One systematic scan over observations (outer) and latent dimensions (inner).
inline void update_latent_utilities(ParameterState& state, const ChoiceDataset& data, const ModelSpec& spec,
                                    RngStream& rng, SamplerTelemetry* telemetry = nullptr) {
    const std::size_t D = data.n_dim(), K = data.n_coef;
    const auto cond = detail::conditioning(state.Sigma, telemetry);
    const auto group = spec.group_of_dim(D);
    const double* beta = state.beta.data();
    std::vector<double> xb(D), z(D), sq(D), sd(D);
    for (std::size_t i = 0; i < data.n_obs; ++i) {
        double* w = &state.w(i, 0);
        const int code = data.code[i];
        detail::design_times(data.design_ptr(i), beta, D, K, xb.data());
        for (std::size_t k = 0; k < D; ++k) {
            sq[k] = std::sqrt(state.q(i, group[k]));
            z[k] = w[k] - xb[k];
        }
        for (std::size_t j = 0; j < D; ++j) {
            const double* r = cond.ratio.data() + j * D;
            double acc = 0.0;
            for (std::size_t k = 0; k < D; ++k)
                if (k != j) acc += r[k] * sq[k] * z[k];
            const double mean = xb[j] - acc / sq[j];
            const double var = cond.var[j] / (sq[j] * sq[j]);
            const auto [lower, upper] = detail::latent_bounds(code, j, w, D);
            double x = sample_truncated_normal(mean, var, lower, upper, rng);
            x = detail::respect_choice(x, code, j, D, lower, upper);
            if (!std::isfinite(x))
                throw NumericalError("non-finite latent utility at observation " + std::to_string(i) +
                                     ", dimension " + std::to_string(j));
            w[j] = x;
            z[j] = x - xb[j];
        }
    }
}

/// Shape and rate of the Gamma full conditional of q_i under MNR:
/// ((ν + J − 1)/2, (ν + z_iᵀΣ⁻¹z_i)/2).
inline std::pair<double, double> mnr_q_conditional(double nu, std::size_t n_dim, double quad) {
    return {0.5 * (nu + static_cast<double>(n_dim)), 0.5 * (nu + quad)};
}

namespace detail {

inline double quad_form(const Conditioning& cond, const double* z) {
    const std::size_t D = cond.D;
    double quad = 0.0;
    for (std::size_t a = 0; a < D; ++a) {
        double s = 0.0;
        for (std::size_t b = 0; b < D; ++b) s += cond.P[a * D + b] * z[b];
        quad += z[a] * s;
    }
    return quad;
}

} // namespace detail

inline void update_q_mnr(ParameterState& state, const ChoiceDataset& data, RngStream& rng,
                         SamplerTelemetry* telemetry = nullptr) {
    const std::size_t D = data.n_dim(), K = data.n_coef;
    const auto cond = detail::conditioning(state.Sigma, telemetry);
    std::vector<double> z(D);
    for (std::size_t i = 0; i < data.n_obs; ++i) {
        detail::design_times(data.design_ptr(i), state.beta.data(), D, K, z.data());
        for (std::size_t k = 0; k < D; ++k) z[k] = state.w(i, k) - z[k];
        const auto [shape, rate] = mnr_q_conditional(state.nu[0], D, detail::quad_form(cond, z.data()));
        state.q(i, 0) = sample_gamma(shape, rate, rng);
    }
}

/// Conditional of the scale of group s for observation i given all other scales.
inline QTargetParams q_target_params(const ParameterState& state, const ChoiceDataset& data,
                                     const ModelSpec& spec, const detail::Conditioning& cond,
                                     const std::vector<int>& group, std::size_t i, std::size_t s,
                                     const double* z) {
    const std::size_t D = data.n_dim();
    double quad = 0.0, cross = 0.0;
    for (std::size_t j = 0; j < D; ++j) {
        if (group[j] != static_cast<int>(s)) continue;
        for (std::size_t k = 0; k < D; ++k) {
            const double pjk = cond.P[j * D + k];
            if (group[k] == static_cast<int>(s))
                quad += z[j] * pjk * z[k];
            else
                cross += z[j] * pjk * std::sqrt(state.q(i, group[k])) * z[k];
        }
    }
    return QTargetParams(state.nu[s] + quad, cross, state.nu[s], spec.dof_groups[s]);
}

/// Metropolised-Independence update of every q_is with mode-matched Gamma proposals.
inline void update_q_genmnr(ParameterState& state, const ChoiceDataset& data, const ModelSpec& spec,
                            RngStream& rng, SamplerTelemetry* telemetry = nullptr) {
    const std::size_t D = data.n_dim(), K = data.n_coef, S = spec.n_scale_groups();
    const auto cond = detail::conditioning(state.Sigma, telemetry);
    const auto group = spec.group_of_dim(D);
    std::vector<double> z(D);
    for (std::size_t i = 0; i < data.n_obs; ++i) {
        detail::design_times(data.design_ptr(i), state.beta.data(), D, K, z.data());
        for (std::size_t k = 0; k < D; ++k) z[k] = state.w(i, k) - z[k];
        for (std::size_t s = 0; s < S; ++s) {
            const auto p = q_target_params(state, data, spec, cond, group, i, s, z.data());
            const auto g = build_q_proposal(p);
            const double current = state.q(i, s);
            const double proposed = sample_gamma(g.alpha_star, g.beta_star, rng);
            const double f_new = q_log_target(proposed, p), f_old = q_log_target(current, p);
            const double g_new = g.log_density(proposed), g_old = g.log_density(current);
            if (!std::isfinite(f_new) || !std::isfinite(f_old) || !std::isfinite(g_new) || !std::isfinite(g_old))
                throw NumericalError("non-finite q target or proposal at observation " + std::to_string(i) +
                                     ", group " + std::to_string(s));
            const bool accept = mh_accept(f_new, g_new, f_old, g_old, rng.uniform());
            if (accept) state.q(i, s) = proposed;
            if (telemetry) {
                ++telemetry->q_attempted;
                telemetry->q_accepted += accept;
            }
        }
    }
}

/// β ~ N(B̂ Σψ_i, B̂), B̂ = (B₀ + Σω_i)⁻¹ with scale-sandwiched weights.
inline void update_beta(ParameterState& state, const ChoiceDataset& data, const ModelSpec& spec, RngStream& rng,
                        SamplerTelemetry* telemetry = nullptr) {
    const std::size_t D = data.n_dim(), K = data.n_coef;
    const auto cond = detail::conditioning(state.Sigma, telemetry);
    const auto group = spec.group_of_dim(D);
    // Whiten each block with P = UᵀU: Y_i = U Q_i^½ X_i, r_i = U Q_i^½ w_i, then
    // Λ = B0 + ΣY_iᵀY_i and ψ = ΣY_iᵀr_i as one product over the stacked rows.
    Matrix Pm(static_cast<Eigen::Index>(D), static_cast<Eigen::Index>(D));
    for (std::size_t a = 0; a < D; ++a)
        for (std::size_t b = 0; b < D; ++b) Pm(a, b) = cond.P[a * D + b];
    Eigen::LLT<Matrix> pllt(Pm);
    if (pllt.info() != Eigen::Success) throw NumericalError("precision of Sigma is not positive definite");
    const Matrix U = pllt.matrixU();
    RowMatrix Y(static_cast<Eigen::Index>(data.n_obs * D), static_cast<Eigen::Index>(K));
    Vector r(static_cast<Eigen::Index>(data.n_obs * D));
    std::vector<double> sq(D);
    for (std::size_t i = 0; i < data.n_obs; ++i) {
        const double* x = data.design_ptr(i);
        const double* w = &state.w(i, 0);
        for (std::size_t k = 0; k < D; ++k) sq[k] = std::sqrt(state.q(i, group[k]));
        for (std::size_t a = 0; a < D; ++a) {
            double* y = &Y(static_cast<Eigen::Index>(i * D + a), 0);
            for (std::size_t k = 0; k < K; ++k) y[k] = 0.0;
            double t = 0.0;
            for (std::size_t b = a; b < D; ++b) {
                const double u = U(a, b) * sq[b];
                const double* xb = x + b * K;
                for (std::size_t k = 0; k < K; ++k) y[k] += u * xb[k];
                t += u * w[b];
            }
            r[static_cast<Eigen::Index>(i * D + a)] = t;
        }
    }
    Matrix lambda = spec.priors.B0;
    lambda.selfadjointView<Eigen::Lower>().rankUpdate(Y.transpose());
    lambda.triangularView<Eigen::StrictlyUpper>() = lambda.transpose().eval();
    const Vector psi = Y.transpose() * r;
    Eigen::LLT<Matrix> llt(lambda);
    if (llt.info() != Eigen::Success) throw NumericalError("posterior precision of beta is not positive definite");
    Vector eps(static_cast<Eigen::Index>(K));
    for (std::size_t k = 0; k < K; ++k) eps[k] = rng.normal();
    Vector beta = llt.solve(psi);
    beta += llt.matrixU().solve(eps);
    if (!beta.allFinite()) throw NumericalError("non-finite beta draw");
    state.beta = beta;
}

/// Σ-update with the trace restriction, by marginal augmentation on the scale.
///
/// The working scale a₀ = α₀² is drawn from its prior given Σ,
/// a₀ ~ InvGamma((J−1)ρ/2, tr(SΣ⁻¹)/2), which lifts (w, β, Σ) to the
/// unrestricted space as (√a₀ w, √a₀ β, a₀Σ). There Σ̃ ~ IW(N + ρ, S + ΣG_i) is
/// proposed and accepted with the ratio of the β prior N(0, a B₀⁻¹) at
/// a = tr(Σ̃)/(J−1). The state returns to the identified scale as
/// (w/α, β/α, Σ̃/a) with α = √(a/a₀), which keeps every choice unchanged.
/// A rejection leaves the state as it was. Returns α (1 on rejection).
///
/// With SigmaUpdate::Printed the working scale is fixed at a₀ = 1 and the
/// proposal is always accepted.
inline double update_sigma(ParameterState& state, const ChoiceDataset& data, const ModelSpec& spec, RngStream& rng,
                           SamplerTelemetry* telemetry = nullptr,
                           SigmaUpdate method = SigmaUpdate::ScaleAugmented) {
    const std::size_t D = data.n_dim(), K = data.n_coef;
    const double Dd = static_cast<double>(D);
    const auto group = spec.group_of_dim(D);
    const bool printed = method == SigmaUpdate::Printed;

    double a0 = 1.0;
    if (!printed) {
        const Matrix precision = detail::precision_of(state.Sigma, nullptr);
        const double t = (spec.priors.S.cwiseProduct(precision)).sum();
        a0 = 0.5 * t / sample_gamma(0.5 * Dd * spec.priors.rho, 1.0, rng);
    }
    const double s0 = std::sqrt(a0);

    std::vector<double> z(D), G(D * D, 0.0);
    for (std::size_t i = 0; i < data.n_obs; ++i) {
        detail::design_times(data.design_ptr(i), state.beta.data(), D, K, z.data());
        for (std::size_t k = 0; k < D; ++k) z[k] = s0 * (state.w(i, k) - z[k]) * std::sqrt(state.q(i, group[k]));
        for (std::size_t a = 0; a < D; ++a)
            for (std::size_t b = 0; b <= a; ++b) G[a * D + b] += z[a] * z[b];
    }
    Matrix scale = spec.priors.S;
    for (std::size_t a = 0; a < D; ++a)
        for (std::size_t b = 0; b <= a; ++b) {
            scale(a, b) += G[a * D + b];
            if (a != b) scale(b, a) += G[a * D + b];
        }
    const auto draw = sample_inverse_wishart(static_cast<double>(data.n_obs) + spec.priors.rho, SpdMatrix(scale), rng);
    const double a1 = draw.matrix().trace() / Dd;
    if (!(a1 > 0.0) || !std::isfinite(a1)) throw NumericalError("invalid trace rescaling factor");

    // log N(√a₀β; 0, a₁B₀⁻¹) − log N(√a₀β; 0, a₀B₀⁻¹)
    const double bqf = a0 * state.beta.dot(spec.priors.B0 * state.beta);
    const double log_ratio = 0.5 * static_cast<double>(K) * std::log(a0 / a1) - 0.5 * bqf * (1.0 / a1 - 1.0 / a0);
    const bool accept = printed || mh_accept(log_ratio, 0.0, 0.0, 0.0, rng.uniform());
    if (telemetry) {
        ++telemetry->sigma_attempted;
        if (accept) ++telemetry->sigma_accepted;
    }
    if (!accept) return 1.0;

    const double alpha = std::sqrt(a1 / a0);
    state.Sigma = draw.matrix() / a1;
    if (std::fabs(state.Sigma.trace() - Dd) > 1e-10) throw NumericalError("trace restriction violated after rescaling");
    state.w /= alpha;
    state.beta /= alpha;
    return alpha;
}

/// Metropolised-Independence update of each ν with a mode-matched Gamma proposal.
inline void update_nu(ParameterState& state, const ModelSpec& spec, RngStream& rng, NuProposalMemory& memory,
                      SamplerTelemetry* telemetry = nullptr) {
    const std::size_t S = spec.n_dof();
    if (memory.previous.size() != S) {
        memory.previous.assign(S, std::nullopt);
        memory.last_mode.assign(S, 0.0);
    }
    if (telemetry && telemetry->nu_attempted.size() != S) {
        telemetry->nu_attempted.assign(S, 0);
        telemetry->nu_accepted.assign(S, 0);
    }
    for (std::size_t s = 0; s < S; ++s) {
        const auto target = NuTargetParams::from_scales(state.q.col(static_cast<Eigen::Index>(s)),
                                                        spec.priors.alpha0, spec.priors.beta0);
        GammaProposal g;
        try {
            const auto built = build_nu_proposal(target, memory.last_mode[s]);
            g = built.proposal;
            memory.last_mode[s] = built.mode;
            if (built.at_boundary && telemetry) ++telemetry->nu_mode_at_boundary;
            memory.previous[s] = g;
        } catch (const ModeNotFound&) {
            if (telemetry) ++telemetry->nu_mode_not_found;
            g = memory.previous[s] ? *memory.previous[s] : boundary_nu_proposal(target);
        }
        const double current = state.nu[s];
        const double proposed = sample_gamma(g.alpha_star, g.beta_star, rng);
        const bool accept = mh_accept(nu_log_target(proposed, target), g.log_density(proposed),
                                      nu_log_target(current, target), g.log_density(current), rng.uniform());
        if (accept) state.nu[s] = proposed;
        if (telemetry) {
            ++telemetry->nu_attempted[s];
            telemetry->nu_accepted[s] += accept;
        }
    }
}

struct SweepOptions {
    std::optional<double> fix_nu;
    bool freeze_q = false;
    /// Verify choice consistency of every w_i after the sweep.
    bool check_invariants = false;
    SigmaUpdate sigma_update = SigmaUpdate::ScaleAugmented;
};

/// Throws unless every latent vector reproduces its observed choice and every scale is positive.
inline void check_state_invariants(const ParameterState& state, const ChoiceDataset& data) {
    const std::size_t D = data.n_dim();
    for (std::size_t i = 0; i < data.n_obs; ++i) {
        if (choice_from_latent(std::span<const double>(&state.w(i, 0), D)) != data.code[i])
            throw NumericalError("latent utilities inconsistent with the choice at observation " + std::to_string(i));
    }
    if (!(std::fabs(state.Sigma.trace() - static_cast<double>(D)) <= 1e-10))
        throw NumericalError("trace of Sigma departs from J - 1");
    if (!(state.q.minCoeff() > 0.0)) throw NumericalError("non-positive latent scale");
    if (state.nu.size() > 0 && !(state.nu.minCoeff() > 0.0)) throw NumericalError("non-positive nu");
}

/// One full sweep in the order w; [q]; β; Σ; [ν].
inline void gibbs_sweep(ParameterState& state, const ChoiceDataset& data, const ModelSpec& spec, RngStream& rng,
                        NuProposalMemory& memory, SamplerTelemetry* telemetry = nullptr,
                        const SweepOptions& options = {}) {
    update_latent_utilities(state, data, spec, rng, telemetry);
    if (!options.freeze_q) {
        if (spec.kernel == Kernel::MNR) update_q_mnr(state, data, rng, telemetry);
        if (spec.kernel == Kernel::GenMNR) update_q_genmnr(state, data, spec, rng, telemetry);
    }
    update_beta(state, data, spec, rng, telemetry);
    update_sigma(state, data, spec, rng, telemetry, options.sigma_update);
    if (spec.kernel != Kernel::MNP && !options.fix_nu) update_nu(state, spec, rng, memory, telemetry);
    if (options.check_invariants) check_state_invariants(state, data);
}

/// β = 0, Σ = I, ν = init, q = 1, and w drawn from truncated normals
/// consistent with the observed choices under those values.
inline ParameterState initial_state(const ChoiceDataset& data, const ModelSpec& spec, const ChainConfig& config,
                                    RngStream& rng) {
    const auto D = static_cast<Eigen::Index>(data.n_dim());
    ParameterState s;
    s.beta = Vector::Zero(static_cast<Eigen::Index>(data.n_coef));
    s.Sigma = Matrix::Identity(D, D);
    s.nu = Vector::Constant(static_cast<Eigen::Index>(spec.n_dof()), config.fix_nu.value_or(config.init_nu));
    s.q = RowMatrix::Ones(static_cast<Eigen::Index>(data.n_obs), static_cast<Eigen::Index>(spec.n_scale_groups()));
    s.w = RowMatrix::Constant(static_cast<Eigen::Index>(data.n_obs), D, -1.0);
    for (std::size_t i = 0; i < data.n_obs; ++i)
        if (data.code[i] < D) s.w(static_cast<Eigen::Index>(i), data.code[i]) = 1.0;
    update_latent_utilities(s, data, spec, rng);
    return s;
}

/// Column names of retained draws: β entries, lower triangle of Σ, then ν.
inline std::vector<std::string> parameter_names(const ChoiceDataset& data, const ModelSpec& spec) {
    std::vector<std::string> names = data.coefficient_names;
    for (std::size_t r = 0; r < data.n_dim(); ++r)
        for (std::size_t c = 0; c <= r; ++c)
            names.push_back("Sigma_" + std::to_string(r + 1) + "_" + std::to_string(c + 1));
    if (spec.kernel == Kernel::MNR) names.push_back("nu");
    if (spec.kernel == Kernel::GenMNR)
        for (std::size_t s = 0; s < spec.n_dof(); ++s) names.push_back("nu_" + std::to_string(s + 1));
    return names;
}

inline void pack_parameters(const Vector& beta, const Matrix& Sigma, const Vector& nu, double* out) {
    std::size_t p = 0;
    for (Eigen::Index k = 0; k < beta.size(); ++k) out[p++] = beta[k];
    for (Eigen::Index r = 0; r < Sigma.rows(); ++r)
        for (Eigen::Index c = 0; c <= r; ++c) out[p++] = Sigma(r, c);
    for (Eigen::Index s = 0; s < nu.size(); ++s) out[p++] = nu[s];
}

/// Inverse of pack_parameters for one draw row.
inline ModelParameters unpack_parameters(const double* row, std::size_t n_coef, std::size_t n_dim, std::size_t n_dof) {
    ModelParameters m;
    const auto K = static_cast<Eigen::Index>(n_coef), D = static_cast<Eigen::Index>(n_dim);
    m.beta.resize(K);
    m.Sigma.resize(D, D);
    m.nu.resize(static_cast<Eigen::Index>(n_dof));
    std::size_t p = 0;
    for (Eigen::Index k = 0; k < K; ++k) m.beta[k] = row[p++];
    for (Eigen::Index r = 0; r < D; ++r)
        for (Eigen::Index c = 0; c <= r; ++c) m.Sigma(r, c) = m.Sigma(c, r) = row[p++];
    for (Eigen::Index s = 0; s < m.nu.size(); ++s) m.nu[s] = row[p++];
    return m;
}

struct ChainResult {
    RowMatrix draws;
    std::vector<std::size_t> iterations;
    SamplerTelemetry telemetry;
    ParameterState final_state;
    std::optional<ChainAborted> error;
};

/// Runs chain `chain_index` with its own stream (seed, chain_index).
inline ChainResult run_chain(const ModelSpec& spec, const ChoiceDataset& data, const ChainConfig& config,
                             std::size_t chain_index = 0) {
    const auto started = std::chrono::steady_clock::now();
    ChainResult out;
    const auto names = parameter_names(data, spec);
    out.draws.resize(static_cast<Eigen::Index>(config.retained()), static_cast<Eigen::Index>(names.size()));
    RngStream rng(config.seed, chain_index);
    NuProposalMemory memory;
    const SweepOptions options{config.fix_nu, config.freeze_q, config.check_invariants, config.sigma_update};
    std::size_t iteration = 0, kept = 0;
    try {
        out.final_state = initial_state(data, spec, config, rng);
        for (iteration = 1; iteration <= config.total_iterations; ++iteration) {
            gibbs_sweep(out.final_state, data, spec, rng, memory, &out.telemetry, options);
            if (config.retains(iteration)) {
                const auto& s = out.final_state;
                pack_parameters(s.beta, s.Sigma, s.nu, &out.draws(static_cast<Eigen::Index>(kept), 0));
                out.iterations.push_back(iteration);
                ++kept;
            }
        }
    } catch (const std::exception& e) {
        out.error.emplace(e.what(), chain_index, iteration);
        out.draws.conservativeResize(static_cast<Eigen::Index>(kept), Eigen::NoChange);
    }
    out.telemetry.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return out;
}

struct FitResult {
    PosteriorDraws draws;
    std::vector<SamplerTelemetry> telemetry;
    std::vector<ParameterState> final_states;
    std::vector<std::optional<ChainAborted>> errors;

    bool aborted() const {
        for (const auto& e : errors)
            if (e) return true;
        return false;
    }
    void rethrow_if_aborted() const {
        for (const auto& e : errors)
            if (e) throw *e;
    }
};

/// Runs all chains concurrently, one thread per chain.
inline FitResult run_chains(const ModelSpec& spec, const ChoiceDataset& data, const ChainConfig& config) {
    config.validate();
    spec.validate(data.n_coef, data.n_alt);
    detail::require(data.n_obs > 0, "run_chains: empty dataset");
    std::vector<ChainResult> results(config.n_chains);
    if (config.n_chains == 1) {
        results[0] = run_chain(spec, data, config, 0);
    } else {
        std::vector<std::thread> workers;
        for (std::size_t c = 0; c < config.n_chains; ++c)
            workers.emplace_back([&, c] { results[c] = run_chain(spec, data, config, c); });
        for (auto& t : workers) t.join();
    }
    FitResult fit;
    fit.draws.names = parameter_names(data, spec);
    for (auto& r : results) {
        fit.draws.chains.push_back(std::move(r.draws));
        fit.draws.iterations.push_back(std::move(r.iterations));
        fit.telemetry.push_back(r.telemetry);
        fit.final_states.push_back(std::move(r.final_state));
        fit.errors.push_back(std::move(r.error));
    }
    return fit;
}

} // namespace robit
