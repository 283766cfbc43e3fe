#pragma once

// Posterior-predictive choice probabilities by Monte-Carlo simulation of the
// kernel errors, plus fit and elasticity metrics.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Cholesky>

#include "robit/distributions.hpp"
#include "robit/error.hpp"
#include "robit/gibbs.hpp"
#include "robit/model.hpp"
#include "robit/posterior.hpp"
#include "robit/rng.hpp"

namespace robit {

struct PredictionConfig {
    std::size_t n_posterior_draws = 200;
    std::size_t n_error_draws = 256;
    std::uint64_t seed = 1;
    /// Worker threads; 0 uses the hardware concurrency. Results do not depend on it.
    std::size_t threads = 0;

    void validate() const {
        detail::require(n_posterior_draws >= 1, "PredictionConfig: n_posterior_draws must be at least 1");
        detail::require(n_error_draws >= 1, "PredictionConfig: n_error_draws must be at least 1");
    }
};

/// Multiplies one observed attribute of one alternative by `factor` for every observation.
struct Scenario {
    std::size_t alternative = 0;  ///< 0-based
    std::string attribute;
    double factor = 1.0;

    /// Fractional change Δ (0.10 for +10%).
    double delta() const { return factor - 1.0; }
    std::string label(const ChoiceDataset& data) const {
        const double pct = std::round(delta() * 1e6) / 1e4;
        std::string p = std::to_string(pct);
        p.erase(p.find_last_not_of('0') + 1);
        if (!p.empty() && p.back() == '.') p.pop_back();
        return "alt=" + data.alternative_names.at(alternative) + ",attr=" + attribute + ",change=" +
               (pct >= 0 ? "+" : "") + p + "%";
    }
};

namespace detail {

inline double parse_double(std::string_view text, std::string_view what) {
    double v = 0.0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data() + (!text.empty() && text[0] == '+'), end, v);
    if (ec != std::errc() || ptr != end) throw InvalidArgument("cannot parse " + std::string(what) + " '" + std::string(text) + "'");
    return v;
}

} // namespace detail

/// Parses "alt=2,attr=k4,change=+10%". The alternative is a name or a 1-based
/// position; the change is a percentage ("+10%") or a factor ("1.1").
inline Scenario parse_scenario(std::string_view text, const ChoiceDataset& data) {
    Scenario s;
    std::optional<std::string> alt;
    bool have_attr = false, have_change = false;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t comma = std::min(text.find(',', pos), text.size());
        const std::string_view item = text.substr(pos, comma - pos);
        const std::size_t eq = item.find('=');
        if (eq == std::string_view::npos) throw InvalidArgument("scenario item '" + std::string(item) + "' is not key=value");
        const std::string_view key = item.substr(0, eq), value = item.substr(eq + 1);
        if (key == "alt") {
            alt = std::string(value);
        } else if (key == "attr") {
            s.attribute = std::string(value);
            have_attr = true;
        } else if (key == "change") {
            if (!value.empty() && value.back() == '%')
                s.factor = 1.0 + detail::parse_double(value.substr(0, value.size() - 1), "change") / 100.0;
            else
                s.factor = detail::parse_double(value, "change");
            have_change = true;
        } else {
            throw InvalidArgument("unknown scenario key '" + std::string(key) + "' (valid: alt, attr, change)");
        }
        pos = comma + 1;
    }
    if (!alt || !have_attr || !have_change) throw InvalidArgument("scenario needs alt, attr and change: '" + std::string(text) + "'");
    const auto named = std::find(data.alternative_names.begin(), data.alternative_names.end(), *alt);
    if (named != data.alternative_names.end()) {
        s.alternative = static_cast<std::size_t>(named - data.alternative_names.begin());
    } else {
        const double v = detail::parse_double(*alt, "alternative");
        detail::require(v >= 1.0 && v <= static_cast<double>(data.n_alt) && v == std::floor(v),
                        "scenario alternative '" + *alt + "' is out of range");
        s.alternative = static_cast<std::size_t>(v) - 1;
    }
    return s;
}

/// Dataset with the scenario applied to the observed attributes and the design rebuilt.
inline ChoiceDataset apply_scenario(const ChoiceDataset& data, const Scenario& s) {
    const auto& names = data.observed.attribute_names;
    const auto it = std::find(names.begin(), names.end(), s.attribute);
    detail::require(it != names.end(), "scenario attribute '" + s.attribute + "' not found");
    detail::require(s.alternative < data.n_alt, "scenario alternative out of range");
    detail::require(s.factor != 1.0 && std::isfinite(s.factor), "scenario change must be nonzero");
    const std::size_t k = static_cast<std::size_t>(it - names.begin());
    ObservedAttributes obs = data.observed;
    bool any_nonzero = false;
    for (std::size_t i = 0; i < obs.n_obs; ++i) {
        any_nonzero |= obs(i, s.alternative, k) != 0.0;
        obs(i, s.alternative, k) *= s.factor;
    }
    detail::require(any_nonzero, "scenario attribute '" + s.attribute + "' is zero for every observation");
    return rebuild_dataset(data, std::move(obs));
}

/// Evenly spaced pooled posterior draws (all of them when fewer are available).
inline std::vector<ModelParameters> select_draws(const PosteriorDraws& draws, const ModelSpec& spec,
                                                 const ChoiceDataset& data, std::size_t n) {
    const auto expected = parameter_names(data, spec);
    if (draws.names != expected) {
        std::string mismatch;
        for (std::size_t k = 0; k < std::max(expected.size(), draws.names.size()); ++k) {
            const std::string a = k < expected.size() ? expected[k] : "<none>";
            const std::string b = k < draws.names.size() ? draws.names[k] : "<none>";
            if (a != b) mismatch += (mismatch.empty() ? "" : ", ") + b + " (expected " + a + ")";
        }
        throw InvalidArgument("draws do not match the model specification: " + mismatch);
    }
    const RowMatrix all = draws.stacked();
    const std::size_t total = static_cast<std::size_t>(all.rows());
    detail::require(total > 0, "select_draws: no retained draws");
    const std::size_t m = std::min(n, total);
    std::vector<ModelParameters> out;
    out.reserve(m);
    for (std::size_t k = 0; k < m; ++k) {
        const std::size_t r = k * total / m;
        out.push_back(unpack_parameters(&all(static_cast<Eigen::Index>(r), 0), data.n_coef, data.n_dim(), spec.n_dof()));
    }
    return out;
}

/// Kernel error vector for one observation: L z scaled per the mixture
/// representation (one scale for MNR, one per block for Gen-MNR).
inline void draw_kernel_error(const ModelSpec& spec, const Matrix& L, const Vector& nu, const std::vector<int>& group,
                              RngStream& rng, std::vector<double>& inv_sq, std::vector<double>& z, double* out) {
    const std::size_t D = z.size();
    const std::size_t S = spec.kernel == Kernel::MNP ? 0 : spec.n_scale_groups();
    inv_sq.resize(S);
    for (std::size_t g = 0; g < S; ++g) {
        const double v = spec.kernel == Kernel::MNR ? nu[0] : nu[static_cast<Eigen::Index>(g)];
        inv_sq[g] = 1.0 / std::sqrt(sample_scaled_chi2(v, rng));
    }
    for (std::size_t k = 0; k < D; ++k) z[k] = rng.normal();
    for (std::size_t a = 0; a < D; ++a) {
        double v = 0.0;
        for (std::size_t b = 0; b <= a; ++b) v += L(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) * z[b];
        out[a] = S ? v * inv_sq[group[a]] : v;
    }
}

/// Choice frequencies (N×J, alternatives in original order) for each dataset,
/// from n_error_draws kernel-error vectors per observation and parameter set.
///
/// Parameter set s uses stream (seed, s) and consumes it in the same order for
/// every dataset, so all datasets share common random numbers.
inline std::vector<RowMatrix> simulate_probabilities(std::span<const ModelParameters> params, const ModelSpec& spec,
                                                     std::span<const ChoiceDataset* const> datasets,
                                                     std::size_t n_error_draws, std::uint64_t seed,
                                                     std::size_t threads = 0) {
    detail::require(!params.empty() && !datasets.empty(), "simulate_probabilities: nothing to simulate");
    detail::require(n_error_draws >= 1, "simulate_probabilities: n_error_draws must be at least 1");
    const ChoiceDataset& ref = *datasets[0];
    const std::size_t N = ref.n_obs, J = ref.n_alt, D = ref.n_dim(), K = ref.n_coef, M = datasets.size();
    for (const auto* d : datasets)
        detail::require(d->n_obs == N && d->n_alt == J && d->n_coef == K && d->base == ref.base,
                        "simulate_probabilities: datasets differ in shape");
    const auto group = spec.group_of_dim(D);
    for (const auto& p : params) {
        detail::require(p.beta.size() == static_cast<Eigen::Index>(K) && p.Sigma.rows() == static_cast<Eigen::Index>(D),
                        "simulate_probabilities: parameter dimensions do not match the data");
        detail::require(spec.kernel == Kernel::MNP || p.nu.size() == static_cast<Eigen::Index>(spec.n_dof()),
                        "simulate_probabilities: nu has the wrong length");
    }

    std::size_t T = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
    T = std::min(T, params.size());
    std::vector<std::vector<std::uint64_t>> counts(T, std::vector<std::uint64_t>(M * N * J, 0));
    std::vector<std::exception_ptr> errors(T);

    const auto work = [&](std::size_t t) {
        try {
            auto& c = counts[t];
            std::vector<double> xb(M * D), e(D), z(D), inv_sq, w(D);
            for (std::size_t s = t; s < params.size(); s += T) {
                const auto& p = params[s];
                Eigen::LLT<Matrix> llt(p.Sigma);
                if (llt.info() != Eigen::Success) throw NumericalError("simulate_probabilities: Sigma is not positive definite");
                const Matrix L = llt.matrixL();
                RngStream rng(seed, s);
                for (std::size_t i = 0; i < N; ++i) {
                    for (std::size_t m = 0; m < M; ++m)
                        detail::design_times(datasets[m]->design_ptr(i), p.beta.data(), D, K, xb.data() + m * D);
                    for (std::size_t r = 0; r < n_error_draws; ++r) {
                        draw_kernel_error(spec, L, p.nu, group, rng, inv_sq, z, e.data());
                        for (std::size_t m = 0; m < M; ++m) {
                            for (std::size_t k = 0; k < D; ++k) w[k] = xb[m * D + k] + e[k];
                            const int code = choice_from_latent(w);
                            ++c[(m * N + i) * J + ref.alternative_of_code(code)];
                        }
                    }
                }
            }
        } catch (...) {
            errors[t] = std::current_exception();
        }
    };
    if (T == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < T; ++t) pool.emplace_back(work, t);
        for (auto& th : pool) th.join();
    }
    for (const auto& err : errors)
        if (err) std::rethrow_exception(err);

    const double total = static_cast<double>(params.size()) * static_cast<double>(n_error_draws);
    std::vector<RowMatrix> out(M, RowMatrix(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(J)));
    for (std::size_t m = 0; m < M; ++m)
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t j = 0; j < J; ++j) {
                std::uint64_t n = 0;
                for (std::size_t t = 0; t < T; ++t) n += counts[t][(m * N + i) * J + j];
                out[m](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = static_cast<double>(n) / total;
            }
    return out;
}

inline RowMatrix simulate_probabilities(std::span<const ModelParameters> params, const ModelSpec& spec,
                                        const ChoiceDataset& data, std::size_t n_error_draws, std::uint64_t seed,
                                        std::size_t threads = 0) {
    const ChoiceDataset* one[] = {&data};
    return std::move(simulate_probabilities(params, spec, one, n_error_draws, seed, threads)[0]);
}

/// Posterior-predictive choice probabilities (N×J).
inline RowMatrix predict_probabilities(const PosteriorDraws& draws, const ModelSpec& spec, const ChoiceDataset& data,
                                       const PredictionConfig& config = {}) {
    config.validate();
    const auto params = select_draws(draws, spec, data, config.n_posterior_draws);
    return simulate_probabilities(params, spec, data, config.n_error_draws, config.seed, config.threads);
}

namespace detail {

inline void require_stochastic(const RowMatrix& p, std::string_view who) {
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        double s = 0.0;
        for (Eigen::Index j = 0; j < p.cols(); ++j) {
            detail::require(p(i, j) >= 0.0 && p(i, j) <= 1.0, std::string(who) + ": probabilities must lie in [0, 1]");
            s += p(i, j);
        }
        detail::require(std::fabs(s - 1.0) <= 1e-9, std::string(who) + ": row " + std::to_string(i) + " does not sum to 1");
    }
}

} // namespace detail

/// Σ_n Σ_j (p_nj − p̂_nj)².
inline double quadratic_loss(const RowMatrix& true_probs, const RowMatrix& fitted_probs) {
    detail::require(true_probs.rows() == fitted_probs.rows() && true_probs.cols() == fitted_probs.cols(),
                    "quadratic_loss: shape mismatch");
    detail::require_stochastic(true_probs, "quadratic_loss");
    detail::require_stochastic(fitted_probs, "quadratic_loss");
    return (true_probs - fitted_probs).squaredNorm();
}

/// Per-observation Brier terms Σ_j (1{y_n = j} − p̂_nj)²; choices are 0-based alternatives.
inline std::vector<double> brier_terms(std::span<const int> choices, const RowMatrix& fitted_probs) {
    detail::require(static_cast<Eigen::Index>(choices.size()) == fitted_probs.rows(), "brier_score: length mismatch");
    detail::require_stochastic(fitted_probs, "brier_score");
    std::vector<double> out(choices.size());
    for (std::size_t n = 0; n < choices.size(); ++n) {
        detail::require(choices[n] >= 0 && choices[n] < fitted_probs.cols(),
                        "brier_score: choice out of range at observation " + std::to_string(n));
        double s = 0.0;
        for (Eigen::Index j = 0; j < fitted_probs.cols(); ++j) {
            const double d = (j == choices[n] ? 1.0 : 0.0) - fitted_probs(static_cast<Eigen::Index>(n), j);
            s += d * d;
        }
        out[n] = s;
    }
    return out;
}

inline double brier_score(std::span<const int> choices, const RowMatrix& fitted_probs) {
    double s = 0.0;
    for (double v : brier_terms(choices, fitted_probs)) s += v;
    return s;
}

inline std::vector<int> observed_choices(const ChoiceDataset& data) {
    std::vector<int> y(data.n_obs);
    for (std::size_t i = 0; i < data.n_obs; ++i) y[i] = static_cast<int>(data.chosen_alternative(i));
    return y;
}

struct ElasticityResult {
    Scenario scenario;
    std::vector<double> baseline_demand;  ///< Q⁰_j
    std::vector<double> scenario_demand;  ///< Q¹_j
    std::vector<double> elasticity;       ///< NaN where Q⁰_j = 0
    std::vector<bool> undefined;
};

/// ((Q¹_j − Q⁰_j)/Q⁰_j)/Δ from aggregate demands.
inline ElasticityResult elasticity_from_demand(const Scenario& s, std::vector<double> q0, std::vector<double> q1) {
    ElasticityResult r;
    r.scenario = s;
    for (std::size_t j = 0; j < q0.size(); ++j) {
        const bool undefined = !(q0[j] > 0.0);
        r.undefined.push_back(undefined);
        r.elasticity.push_back(undefined ? std::numeric_limits<double>::quiet_NaN()
                                         : ((q1[j] - q0[j]) / q0[j]) / s.delta());
    }
    r.baseline_demand = std::move(q0);
    r.scenario_demand = std::move(q1);
    return r;
}

inline std::vector<double> aggregate_demand(const RowMatrix& p) {
    std::vector<double> q(static_cast<std::size_t>(p.cols()), 0.0);
    for (Eigen::Index i = 0; i < p.rows(); ++i)
        for (Eigen::Index j = 0; j < p.cols(); ++j) q[static_cast<std::size_t>(j)] += p(i, j);
    return q;
}

/// Aggregate arc elasticities for several scenarios at fixed parameter sets,
/// all sharing one pass of common random numbers with the baseline.
inline std::vector<ElasticityResult> arc_elasticities(std::span<const ModelParameters> params, const ModelSpec& spec,
                                                      const ChoiceDataset& data, std::span<const Scenario> scenarios,
                                                      std::size_t n_error_draws, std::uint64_t seed,
                                                      std::size_t threads = 0) {
    std::vector<ChoiceDataset> perturbed;
    perturbed.reserve(scenarios.size());
    for (const auto& s : scenarios) perturbed.push_back(apply_scenario(data, s));
    std::vector<const ChoiceDataset*> all{&data};
    for (const auto& d : perturbed) all.push_back(&d);
    const auto probs = simulate_probabilities(params, spec, all, n_error_draws, seed, threads);
    const auto q0 = aggregate_demand(probs[0]);
    std::vector<ElasticityResult> out;
    for (std::size_t k = 0; k < scenarios.size(); ++k)
        out.push_back(elasticity_from_demand(scenarios[k], q0, aggregate_demand(probs[k + 1])));
    return out;
}

inline std::vector<ElasticityResult> arc_elasticities(const PosteriorDraws& draws, const ModelSpec& spec,
                                                      const ChoiceDataset& data, std::span<const Scenario> scenarios,
                                                      const PredictionConfig& config = {}) {
    config.validate();
    const auto params = select_draws(draws, spec, data, config.n_posterior_draws);
    return arc_elasticities(params, spec, data, scenarios, config.n_error_draws, config.seed, config.threads);
}

inline ElasticityResult arc_elasticity(const PosteriorDraws& draws, const ModelSpec& spec, const ChoiceDataset& data,
                                       const Scenario& scenario, const PredictionConfig& config = {}) {
    return arc_elasticities(draws, spec, data, std::span<const Scenario>(&scenario, 1), config)[0];
}

} // namespace robit
