#pragma once

// Forward simulation of choice data from a kernel and true parameters, with
// the two synthetic experiments as ready-made configurations.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Cholesky>

#include "robit/distributions.hpp"
#include "robit/error.hpp"
#include "robit/model.hpp"
#include "robit/predictive.hpp"
#include "robit/rng.hpp"

namespace robit {

/// Independent U(lower, upper) draws for every observed attribute.
struct AttributeLaw {
    double lower = 0.0;
    double upper = 2.0;
};

struct GenerateOptions {
    std::size_t base = 0;
    std::vector<std::size_t> asc_alternatives;
    std::vector<std::string> alternative_names;
    std::vector<std::string> attribute_names;
    /// Error draws per observation for the true probabilities; 0 skips them.
    std::size_t true_prob_draws = 10000;
    std::uint64_t true_prob_seed = 0;
};

struct GeneratedData {
    ChoiceDataset data;
    /// Parameters as supplied (scale not restricted).
    ModelParameters truth;
    /// Same model on the identified scale: Σ/c and β/√c with c = tr(Σ)/(J−1).
    ModelParameters identified;
    double scale = 1.0;
    RowMatrix true_probabilities;
};

/// Identified-scale version of a parameter set.
inline ModelParameters identify(const ModelParameters& p) {
    const double c = p.Sigma.trace() / static_cast<double>(p.Sigma.rows());
    detail::require(c > 0.0, "identify: Sigma must have positive trace");
    return {p.beta / std::sqrt(c), p.Sigma / c, p.nu};
}

/// Draws attributes, kernel errors and choices for N observations.
inline GeneratedData generate(const ModelSpec& spec, const ModelParameters& truth, std::size_t N,
                              const AttributeLaw& law, RngStream& rng, const GenerateOptions& options) {
    const std::size_t J = static_cast<std::size_t>(truth.Sigma.rows()) + 1, D = J - 1;
    const std::size_t n_asc = options.asc_alternatives.size();
    detail::require(N >= 1, "generate: N must be at least 1");
    detail::require(law.lower < law.upper, "generate: attribute law needs lower < upper");
    detail::require(static_cast<std::size_t>(truth.beta.size()) >= n_asc, "generate: beta shorter than the ASC block");
    const std::size_t A = static_cast<std::size_t>(truth.beta.size()) - n_asc;
    detail::require(truth.beta.allFinite() && truth.Sigma.allFinite() && truth.nu.allFinite(), "generate: non-finite parameters");
    spec.validate(static_cast<std::size_t>(truth.beta.size()), J);
    detail::require(spec.kernel == Kernel::MNP || truth.nu.size() == static_cast<Eigen::Index>(spec.n_dof()),
                    "generate: nu has the wrong length for the kernel");
    for (Eigen::Index s = 0; s < truth.nu.size(); ++s) detail::require(truth.nu[s] > 0.0, "generate: nu must be positive");
    Eigen::LLT<Matrix> llt(truth.Sigma);
    detail::require(llt.info() == Eigen::Success, "generate: Sigma must be positive definite");
    const Matrix L = llt.matrixL();

    ObservedAttributes obs(N, J, A);
    obs.attribute_names = options.attribute_names;
    if (obs.attribute_names.empty())
        for (std::size_t k = 0; k < A; ++k) obs.attribute_names.push_back("x" + std::to_string(k + 1));
    for (auto& v : obs.values) v = law.lower + (law.upper - law.lower) * rng.uniform();

    std::vector<int> placeholder(N, static_cast<int>(options.base));
    GeneratedData out;
    out.data = build_dataset(std::move(obs), placeholder, options.base, options.asc_alternatives, options.alternative_names);
    auto& d = out.data;

    const auto group = spec.group_of_dim(D);
    std::vector<double> xb(D), e(D), z(D), inv_sq;
    for (std::size_t i = 0; i < N; ++i) {
        detail::design_times(d.design_ptr(i), truth.beta.data(), D, d.n_coef, xb.data());
        draw_kernel_error(spec, L, truth.nu, group, rng, inv_sq, z, e.data());
        for (std::size_t k = 0; k < D; ++k) e[k] += xb[k];
        d.code[i] = choice_from_latent(e);
    }
    out.truth = truth;
    out.identified = identify(truth);
    out.scale = truth.Sigma.trace() / static_cast<double>(D);
    if (options.true_prob_draws > 0) {
        const ModelParameters one[] = {out.identified};
        out.true_probabilities = simulate_probabilities(one, spec, d, options.true_prob_draws, options.true_prob_seed);
    }
    return out;
}

inline std::vector<double> realized_shares(const ChoiceDataset& d) {
    std::vector<double> s(d.n_alt, 0.0);
    for (std::size_t i = 0; i < d.n_obs; ++i) s[d.chosen_alternative(i)] += 1.0;
    for (auto& v : s) v /= static_cast<double>(d.n_obs);
    return s;
}

// ---------------------------------------------------------------------------
// Synthetic experiments

struct ExampleOptions {
    std::size_t true_prob_draws = 10000;
    /// Error draws per observation for the true elasticities; 0 skips them.
    std::size_t elasticity_draws = 1000;
};

struct ExampleBundle {
    ModelSpec spec;
    GeneratedData generated;
    std::vector<Scenario> scenarios;
    std::vector<ElasticityResult> true_elasticities;
};

/// Scenarios of the elasticity tables: attribute k4 of alternative 2, then of
/// alternative 1, each increased by 5%, 10% and 25%.
inline std::vector<Scenario> example_scenarios() {
    std::vector<Scenario> s;
    for (std::size_t alt : {1u, 0u})
        for (double f : {1.05, 1.10, 1.25}) s.push_back({alt, "k4", f});
    return s;
}

namespace detail {

inline Matrix example_sigma() {
    Matrix omega(3, 3);
    omega << 1.0, 0.3, 0.0, 0.3, 1.0, 0.3, 0.0, 0.3, 1.0;
    const Vector sd = Vector(Eigen::Vector3d(1.4, 0.8, 1.2)).cwiseSqrt();
    return sd.asDiagonal() * omega * sd.asDiagonal();
}

inline ExampleBundle make_example(Kernel kernel, const Vector& beta, const Vector& nu, std::size_t N,
                                  std::uint64_t seed, const ExampleOptions& options) {
    ExampleBundle b;
    b.spec = ModelSpec::make(kernel, 7, 4);
    GenerateOptions g;
    g.base = 3;
    g.asc_alternatives = {0, 1, 2};
    g.alternative_names = {"1", "2", "3", "4"};
    g.attribute_names = {"k4", "k5", "k6", "k7"};
    g.true_prob_draws = options.true_prob_draws;
    g.true_prob_seed = seed ^ 0x7275746850726f62ULL;
    RngStream rng(seed);
    b.generated = generate(b.spec, {beta, example_sigma(), nu}, N, AttributeLaw{0.0, 2.0}, rng, g);
    b.scenarios = example_scenarios();
    if (options.elasticity_draws > 0) {
        const ModelParameters one[] = {b.generated.identified};
        b.true_elasticities = arc_elasticities(one, b.spec, b.generated.data, b.scenarios, options.elasticity_draws,
                                               seed ^ 0x456c617374696369ULL);
    }
    return b;
}

} // namespace detail

/// MNR data: β = (1, −2, 1, 1, −1, 1, −1), Σ = DΩD, ν = 2, base alternative 4.
inline ExampleBundle example1(std::size_t N, std::uint64_t seed, const ExampleOptions& options = {}) {
    Vector beta(7);
    beta << 1.0, -2.0, 1.0, 1.0, -1.0, 1.0, -1.0;
    return detail::make_example(Kernel::MNR, beta, Vector::Constant(1, 2.0), N, seed, options);
}

/// Gen-MNR data: as example1 but ν = (5, 3, 1) and β₂ = −1.8.
inline ExampleBundle example2(std::size_t N, std::uint64_t seed, const ExampleOptions& options = {}) {
    Vector beta(7);
    beta << 1.0, -1.8, 1.0, 1.0, -1.0, 1.0, -1.0;
    return detail::make_example(Kernel::GenMNR, beta, Eigen::Vector3d(5.0, 3.0, 1.0), N, seed, options);
}

} // namespace robit
