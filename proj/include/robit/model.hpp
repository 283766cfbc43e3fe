#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "robit/distributions.hpp"
#include "robit/error.hpp"

namespace robit {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Kernel { MNP, MNR, GenMNR };

inline std::string_view to_string(Kernel k) {
    switch (k) {
    case Kernel::MNP: return "mnp";
    case Kernel::MNR: return "mnr";
    case Kernel::GenMNR: return "genmnr";
    }
    return "?";
}

inline constexpr std::string_view kValidKernels = "mnp, mnr, genmnr";

inline Kernel parse_kernel(std::string_view name) {
    std::string s(name);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    std::erase(s, '-');
    if (s == "mnp") return Kernel::MNP;
    if (s == "mnr") return Kernel::MNR;
    if (s == "genmnr") return Kernel::GenMNR;
    throw InvalidArgument("unknown kernel '" + std::string(name) + "'; valid kernels: " +
                          std::string(kValidKernels));
}

/// Observed attributes before differencing: value(i, j, k) for observation i,
/// alternative j, attribute k. Alternative-specific constants are not part of
/// this tensor; they are requested separately when building the dataset.
struct ObservedAttributes {
    std::size_t n_obs = 0;
    std::size_t n_alt = 0;
    std::size_t n_attr = 0;
    std::vector<double> values;
    std::vector<std::string> attribute_names;

    ObservedAttributes() = default;
    ObservedAttributes(std::size_t n, std::size_t j, std::size_t k)
        : n_obs(n), n_alt(j), n_attr(k), values(n * j * k, 0.0) {}

    double& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return values[(i * n_alt + j) * n_attr + k];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return values[(i * n_alt + j) * n_attr + k];
    }
};

/// Differenced choice data.
///
/// Latent dimension d (0-based, d < J-1) is the utility difference of
/// alternative `dim_alternative[d]` against the base alternative. Choices are
/// stored as latent codes: d for a non-base alternative, J-1 for the base.
struct ChoiceDataset {
    std::size_t n_obs = 0;
    std::size_t n_alt = 0;
    std::size_t n_coef = 0;
    std::size_t base = 0;
    std::vector<int> dim_alternative;
    std::vector<double> X;  ///< n_obs blocks of (J-1) x K, row-major
    std::vector<int> code;  ///< latent choice code per observation
    std::vector<std::string> alternative_names;
    std::vector<std::string> coefficient_names;
    std::vector<std::size_t> asc_alternatives;
    ObservedAttributes observed;

    std::size_t n_dim() const noexcept { return n_alt - 1; }

    /// (J-1) x K design block of observation i.
    Eigen::Map<const RowMatrix> design(std::size_t i) const {
        return {X.data() + i * n_dim() * n_coef, static_cast<Eigen::Index>(n_dim()),
                static_cast<Eigen::Index>(n_coef)};
    }
    const double* design_ptr(std::size_t i) const { return X.data() + i * n_dim() * n_coef; }

    /// 0-based alternative index of a latent code.
    std::size_t alternative_of_code(int c) const {
        return c == static_cast<int>(n_dim()) ? base : static_cast<std::size_t>(dim_alternative[c]);
    }
    std::size_t chosen_alternative(std::size_t i) const { return alternative_of_code(code[i]); }
};

/// Choice rule: the maximal latent utility difference wins if positive,
/// otherwise the base alternative. Returns the latent code (J-1 for the base).
/// Ties resolve to the lowest index; a zero maximum selects the maximizing
/// non-base alternative.
inline int choice_from_latent(std::span<const double> w) {
    detail::require(!w.empty(), "choice_from_latent: empty latent vector");
    std::size_t best = 0;
    for (std::size_t j = 1; j < w.size(); ++j) {
        if (w[j] > w[best]) best = j;
    }
    detail::require(std::isfinite(w[best]), "choice_from_latent: non-finite latent utility");
    return w[best] < 0.0 ? static_cast<int>(w.size()) : static_cast<int>(best);
}

/// Differences observed attributes against the base alternative.
///
/// Columns are ordered: one alternative-specific constant per entry of
/// `asc_alternatives` (indicator differenced like any attribute), then the
/// observed attributes. `choices` holds 0-based alternative indices.
inline ChoiceDataset build_dataset(ObservedAttributes observed, std::span<const int> choices,
                                   std::size_t base, std::vector<std::size_t> asc_alternatives = {},
                                   std::vector<std::string> alternative_names = {}) {
    const std::size_t n = observed.n_obs;
    const std::size_t J = observed.n_alt;
    detail::require(J >= 2, "build_dataset: need at least two alternatives");
    detail::require(observed.values.size() == n * J * observed.n_attr,
                    "build_dataset: attribute tensor size does not match its dimensions");
    detail::require(choices.size() == n, "build_dataset: choices length " + std::to_string(choices.size()) +
                                             " does not match " + std::to_string(n) + " observations");
    detail::require(base < J, "build_dataset: base alternative out of range");
    std::sort(asc_alternatives.begin(), asc_alternatives.end());
    detail::require(std::adjacent_find(asc_alternatives.begin(), asc_alternatives.end()) ==
                        asc_alternatives.end(),
                    "build_dataset: duplicate alternative-specific constant");
    for (auto a : asc_alternatives) detail::require(a < J, "build_dataset: ASC alternative out of range");
    detail::require(asc_alternatives.size() < J,
                    "build_dataset: constants on all alternatives are not identified");
    if (observed.attribute_names.empty()) {
        for (std::size_t k = 0; k < observed.n_attr; ++k)
            observed.attribute_names.push_back("x" + std::to_string(k + 1));
    }
    detail::require(observed.attribute_names.size() == observed.n_attr,
                    "build_dataset: attribute name count mismatch");
    if (alternative_names.empty()) {
        for (std::size_t j = 0; j < J; ++j) alternative_names.push_back(std::to_string(j + 1));
    }
    detail::require(alternative_names.size() == J, "build_dataset: alternative name count mismatch");

    ChoiceDataset d;
    d.n_obs = n;
    d.n_alt = J;
    d.base = base;
    d.alternative_names = std::move(alternative_names);
    d.asc_alternatives = asc_alternatives;
    for (std::size_t j = 0; j < J; ++j)
        if (j != base) d.dim_alternative.push_back(static_cast<int>(j));
    for (auto a : asc_alternatives) d.coefficient_names.push_back("asc_" + d.alternative_names[a]);
    for (const auto& name : observed.attribute_names) d.coefficient_names.push_back(name);
    d.n_coef = d.coefficient_names.size();

    const std::size_t D = J - 1, K = d.n_coef, n_asc = asc_alternatives.size();
    std::vector<int> alt_to_code(J);
    for (std::size_t c = 0; c < D; ++c) alt_to_code[d.dim_alternative[c]] = static_cast<int>(c);
    alt_to_code[base] = static_cast<int>(D);

    d.X.assign(n * D * K, 0.0);
    d.code.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int y = choices[i];
        if (y < 0 || static_cast<std::size_t>(y) >= J)
            throw DataError("choice index " + std::to_string(y) + " out of range [0, " +
                                std::to_string(J) + ")",
                            static_cast<std::ptrdiff_t>(i));
        d.code[i] = alt_to_code[y];
        double* xi = d.X.data() + i * D * K;
        for (std::size_t r = 0; r < D; ++r) {
            const std::size_t alt = d.dim_alternative[r];
            double* row = xi + r * K;
            for (std::size_t a = 0; a < n_asc; ++a)
                row[a] = (asc_alternatives[a] == alt ? 1.0 : 0.0) - (asc_alternatives[a] == base ? 1.0 : 0.0);
            for (std::size_t k = 0; k < observed.n_attr; ++k)
                row[n_asc + k] = observed(i, alt, k) - observed(i, base, k);
        }
    }
    d.observed = std::move(observed);
    return d;
}

/// Rebuilds a dataset from (possibly modified) observed attributes, keeping
/// choices, base, constants, and names.
inline ChoiceDataset rebuild_dataset(const ChoiceDataset& d, ObservedAttributes observed) {
    std::vector<int> choices(d.n_obs);
    for (std::size_t i = 0; i < d.n_obs; ++i) choices[i] = static_cast<int>(d.chosen_alternative(i));
    return build_dataset(std::move(observed), choices, d.base, d.asc_alternatives, d.alternative_names);
}

/// Subset of observations, in the given order.
inline ChoiceDataset subset(const ChoiceDataset& d, std::span<const std::size_t> rows) {
    ObservedAttributes obs(rows.size(), d.n_alt, d.observed.n_attr);
    obs.attribute_names = d.observed.attribute_names;
    std::vector<int> choices;
    choices.reserve(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const std::size_t i = rows[r];
        detail::require(i < d.n_obs, "subset: row out of range");
        for (std::size_t j = 0; j < d.n_alt; ++j)
            for (std::size_t k = 0; k < obs.n_attr; ++k) obs(r, j, k) = d.observed(i, j, k);
        choices.push_back(static_cast<int>(d.chosen_alternative(i)));
    }
    return build_dataset(std::move(obs), choices, d.base, d.asc_alternatives, d.alternative_names);
}

/// Prior hyperparameters. B0 is a prior precision; the prior mean of β is
/// fixed at zero.
struct PriorSpec {
    Vector zeta0;
    Matrix B0;
    double rho = 0.0;
    Matrix S;
    double alpha0 = 2.0;
    double beta0 = 0.1;

    /// ζ₀ = 0, B₀ = 10⁻² I, ρ = J + 1, S = I, α₀ = 2, β₀ = 0.1.
    static PriorSpec defaults(std::size_t n_coef, std::size_t n_alt) {
        PriorSpec p;
        const auto K = static_cast<Eigen::Index>(n_coef);
        const auto D = static_cast<Eigen::Index>(n_alt - 1);
        p.zeta0 = Vector::Zero(K);
        p.B0 = 1e-2 * Matrix::Identity(K, K);
        p.rho = static_cast<double>(n_alt) + 1.0;
        p.S = Matrix::Identity(D, D);
        return p;
    }

    void validate(std::size_t n_coef, std::size_t n_alt) const {
        const auto K = static_cast<Eigen::Index>(n_coef);
        const auto D = static_cast<Eigen::Index>(n_alt - 1);
        detail::require(zeta0.size() == K, "PriorSpec: zeta0 must have one entry per coefficient");
        detail::require(zeta0.isZero(0.0), "PriorSpec: a nonzero prior mean for beta is not supported");
        detail::require(B0.rows() == K && B0.cols() == K, "PriorSpec: B0 must be K x K");
        (void)SpdMatrix(B0);
        detail::require(S.rows() == D && S.cols() == D, "PriorSpec: S must be (J-1) x (J-1)");
        (void)SpdMatrix(S);
        detail::require(rho > static_cast<double>(n_alt) - 2.0, "PriorSpec: rho must exceed J - 2");
        detail::require(alpha0 > 0.0 && beta0 > 0.0, "PriorSpec: alpha0 and beta0 must be positive");
    }
};

struct ModelSpec {
    Kernel kernel = Kernel::MNP;
    /// Block sizes p (Gen-MNR only); each block of latent dimensions shares one DOF.
    std::vector<int> dof_groups;
    PriorSpec priors;

    static ModelSpec make(Kernel kernel, std::size_t n_coef, std::size_t n_alt) {
        ModelSpec s;
        s.kernel = kernel;
        if (kernel == Kernel::GenMNR) s.dof_groups.assign(n_alt - 1, 1);
        s.priors = PriorSpec::defaults(n_coef, n_alt);
        return s;
    }

    void validate(std::size_t n_coef, std::size_t n_alt) const {
        if (kernel == Kernel::GenMNR) {
            const auto S = dof_groups.size();
            detail::require(S > 1 && S <= n_alt - 1, "ModelSpec: Gen-MNR needs 1 < S <= J - 1 DOF groups");
            long total = 0;
            for (int p : dof_groups) {
                detail::require(p > 0, "ModelSpec: DOF group sizes must be positive");
                total += p;
            }
            detail::require(total == static_cast<long>(n_alt - 1),
                            "ModelSpec: DOF group sizes must sum to J - 1");
        } else {
            detail::require(dof_groups.empty(), "ModelSpec: DOF groups apply to Gen-MNR only");
        }
        priors.validate(n_coef, n_alt);
    }

    /// Number of latent scale columns q per observation (1 for MNP/MNR).
    std::size_t n_scale_groups() const { return kernel == Kernel::GenMNR ? dof_groups.size() : 1; }

    /// Number of DOF parameters.
    std::size_t n_dof() const {
        switch (kernel) {
        case Kernel::MNP: return 0;
        case Kernel::MNR: return 1;
        case Kernel::GenMNR: return dof_groups.size();
        }
        return 0;
    }

    /// Scale-group index of each latent dimension.
    std::vector<int> group_of_dim(std::size_t n_dim) const {
        std::vector<int> g(n_dim, 0);
        if (kernel == Kernel::GenMNR) {
            std::size_t d = 0;
            for (std::size_t s = 0; s < dof_groups.size(); ++s)
                for (int r = 0; r < dof_groups[s] && d < n_dim; ++r) g[d++] = static_cast<int>(s);
        }
        return g;
    }
};

/// One Gibbs state. q has one column per scale group; for MNP it stays at 1.
struct ParameterState {
    Vector beta;
    Matrix Sigma;
    Vector nu;
    RowMatrix w;
    RowMatrix q;
};

/// Parameters that define a data-generating or predictive kernel.
struct ModelParameters {
    Vector beta;
    Matrix Sigma;
    Vector nu;  ///< empty for MNP
};

enum class Severity { Info, Warning, Error };

struct Diagnostic {
    Severity severity;
    std::string code;
    std::string message;
};

struct Diagnostics {
    std::vector<Diagnostic> items;
    std::vector<double> class_shares;  ///< per alternative, original order

    bool ok() const {
        return std::none_of(items.begin(), items.end(),
                            [](const Diagnostic& d) { return d.severity == Severity::Error; });
    }
    bool has(std::string_view code) const {
        return std::any_of(items.begin(), items.end(), [&](const Diagnostic& d) { return d.code == code; });
    }
};

/// Structural and descriptive checks; never throws for data problems.
inline Diagnostics validate(const ChoiceDataset& data, const ModelSpec& spec) {
    Diagnostics out;
    auto add = [&](Severity s, std::string code, std::string msg) {
        out.items.push_back({s, std::move(code), std::move(msg)});
    };
    const std::size_t D = data.n_dim(), K = data.n_coef;
    if (data.n_alt < 2) {
        add(Severity::Error, "structure", "fewer than two alternatives");
        return out;
    }
    if (data.X.size() != data.n_obs * D * K || data.code.size() != data.n_obs) {
        add(Severity::Error, "structure", "design or choice vector size does not match dimensions");
        return out;
    }
    try {
        spec.validate(K, data.n_alt);
    } catch (const std::exception& e) {
        add(Severity::Error, "spec", e.what());
    }

    std::vector<std::size_t> counts(data.n_alt, 0);
    for (std::size_t i = 0; i < data.n_obs; ++i) {
        const int c = data.code[i];
        if (c < 0 || c > static_cast<int>(D)) {
            add(Severity::Error, "choice", "choice code out of range at row " + std::to_string(i));
            continue;
        }
        ++counts[data.alternative_of_code(c)];
    }
    out.class_shares.resize(data.n_alt, 0.0);
    for (std::size_t j = 0; j < data.n_alt; ++j) {
        out.class_shares[j] = data.n_obs ? static_cast<double>(counts[j]) / data.n_obs : 0.0;
        add(Severity::Info, "share", "alternative " + data.alternative_names[j] + ": " +
                                         std::to_string(100.0 * out.class_shares[j]) + "%");
    }
    const auto observed_classes = std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; });
    if (data.n_obs > 0 && observed_classes == 1)
        add(Severity::Warning, "degenerate", "degenerate: single observed class");
    for (std::size_t j = 0; j < data.n_alt; ++j)
        if (data.n_obs > 0 && counts[j] == 0 && observed_classes > 1)
            add(Severity::Warning, "unobserved", "alternative " + data.alternative_names[j] + " never chosen");

    bool reported_nonfinite = false;
    std::vector<bool> nonzero(K, false);
    for (std::size_t i = 0; i < data.n_obs; ++i) {
        const double* x = data.design_ptr(i);
        for (std::size_t r = 0; r < D; ++r)
            for (std::size_t k = 0; k < K; ++k) {
                const double v = x[r * K + k];
                if (!std::isfinite(v)) {
                    if (!reported_nonfinite)
                        add(Severity::Error, "nonfinite",
                            "non-finite design value at observation " + std::to_string(i) + ", row " +
                                std::to_string(r) + ", column " + data.coefficient_names[k]);
                    reported_nonfinite = true;
                } else if (v != 0.0) {
                    nonzero[k] = true;
                }
            }
    }
    for (std::size_t k = 0; k < K; ++k)
        if (data.n_obs > 0 && !nonzero[k])
            add(Severity::Warning, "degenerate_column",
                "degenerate column " + data.coefficient_names[k] + ": identically zero after differencing");
    return out;
}

} // namespace robit
