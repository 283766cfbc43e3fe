#include <cmath>
#include <limits>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>
#include <gtest/gtest.h>

#include "robit/distributions.hpp"
#include "robit/tail_proposals.hpp"
#include "test_support.hpp"

namespace {

using namespace robit;

double log_gamma_density(double x, double shape, double rate) {
    return shape * std::log(rate) - boost::math::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

std::vector<double> random_scales(std::size_t n, double nu, std::uint64_t seed) {
    RngStream rng(seed);
    std::vector<double> q(n);
    for (auto& v : q) v = sample_scaled_chi2(nu, rng);
    return q;
}

TEST(NuTarget, DifferencesMatchDensityProduct) {
    const double alpha0 = 2.0, beta0 = 0.1;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto q = random_scales(50 + seed, 0.5 + seed, seed);
        const auto p = NuTargetParams::from_scales(q, alpha0, beta0);
        RngStream rng(seed + 100);
        const double nu1 = 0.1 + 20.0 * rng.uniform(), nu2 = 0.1 + 20.0 * rng.uniform();
        double oracle = log_gamma_density(nu1, alpha0, beta0) - log_gamma_density(nu2, alpha0, beta0);
        for (double v : q) oracle += log_gamma_density(v, nu1 / 2, nu1 / 2) - log_gamma_density(v, nu2 / 2, nu2 / 2);
        EXPECT_NEAR(nu_log_target(nu1, p) - nu_log_target(nu2, p), oracle, 1e-10 * std::max(1.0, std::fabs(oracle)));
    }
}

TEST(NuTarget, PriorOnlyWhenNoScales) {
    const auto p = NuTargetParams::from_scales(std::vector<double>{}, 3.0, 0.4);
    for (double nu : {0.1, 1.0, 7.0}) EXPECT_DOUBLE_EQ(nu_log_target(nu, p), 2.0 * std::log(nu) - 0.4 * nu);
    EXPECT_THROW(nu_log_target(0.0, p), InvalidArgument);
}

TEST(NuTarget, DerivativesMatchFiniteDifferences) {
    const auto q = random_scales(200, 4.0, 3);
    const auto p = NuTargetParams::from_scales(q, 2.0, 0.1);
    for (double nu : {0.5, 2.0, 10.0, 50.0}) {
        const double h = 1e-5 * nu;
        const double fd1 = (nu_log_target(nu + h, p) - nu_log_target(nu - h, p)) / (2 * h);
        EXPECT_NEAR(nu_log_target_d1(nu, p), fd1, 1e-6 * std::max(1.0, std::fabs(fd1))) << nu;
        const double fd2 = (nu_log_target_d1(nu + h, p) - nu_log_target_d1(nu - h, p)) / (2 * h);
        EXPECT_NEAR(nu_log_target_d2(nu, p), fd2, 1e-6 * std::max(1.0, std::fabs(fd2))) << nu;
    }
}

TEST(NuProposal, MatchingIdentities) {
    const auto q = random_scales(300, 3.0, 4);
    const auto p = NuTargetParams::from_scales(q, 2.0, 0.1);
    const auto built = build_nu_proposal(p);
    const auto& g = built.proposal;
    const double l2 = nu_log_target_d2(built.mode, p);
    EXPECT_LT(std::fabs(nu_log_target_d1(built.mode, p)), 1e-9);
    EXPECT_NEAR((g.alpha_star - 1.0) / g.beta_star, built.mode, 1e-12 * built.mode);
    EXPECT_NEAR(g.beta_star * g.beta_star / (g.alpha_star - 1.0), -l2, 1e-12 * std::fabs(l2));
    // h'(ν*) = (α*−1)/ν* − β* = 0
    EXPECT_NEAR((g.alpha_star - 1.0) / built.mode - g.beta_star, 0.0, 1e-12 * g.beta_star);
    EXPECT_GT(g.alpha_star, 1.0);
}

TEST(NuProposal, ModeMatchesGridSearch) {
    std::vector<double> q(100, 1.0);
    const auto p = NuTargetParams::from_scales(q, 2.0, 0.1);
    double best = 0.05, best_value = -std::numeric_limits<double>::infinity();
    for (double nu = 0.05; nu <= 500.0; nu += 1e-3) {
        const double v = nu_log_target(nu, p);
        if (v > best_value) best_value = v, best = nu;
    }
    const auto built = build_nu_proposal(p);
    EXPECT_NEAR(built.mode, best, 1e-3);
}

TEST(NuProposal, BoundaryMaximizer) {
    // Scales tightly around 1 push the unconstrained mode beyond the interval.
    std::vector<double> q(100000, 1.0);
    const auto p = NuTargetParams::from_scales(q, 2.0, 1e-6);
    const auto built = build_nu_proposal(p);
    EXPECT_TRUE(built.at_boundary);
    EXPECT_EQ(built.mode, kNuSearchUpper);
    EXPECT_NEAR((built.proposal.alpha_star - 1.0) / built.proposal.beta_star, kNuSearchUpper, 1e-8);
}

TEST(NuProposal, ModeNotFoundWhenCurvatureIsPositive) {
    // Prior-only target with α₀ < 1 is convex in log space near zero.
    const auto p = NuTargetParams::from_scales(std::vector<double>{}, 0.5, 1.0);
    EXPECT_THROW(build_nu_proposal(p), ModeNotFound);
    const auto g = boundary_nu_proposal(p);
    EXPECT_EQ(g.alpha_star, 1.0);
    EXPECT_EQ(g.beta_star, 1.0 / kNuSearchLower);
}

TEST(NuProposal, RandomTargetsSatisfyIdentities) {
    RngStream rng(5);
    int checked = 0;
    for (int t = 0; t < 10000; ++t) {
        const std::size_t n = 5 + static_cast<std::size_t>(200 * rng.uniform());
        const double nu_true = 0.3 + 40.0 * rng.uniform();
        std::vector<double> q(n);
        for (auto& v : q) v = sample_scaled_chi2(nu_true, rng);
        const auto p = NuTargetParams::from_scales(q, 0.5 + 3.0 * rng.uniform(), 0.01 + rng.uniform());
        NuProposal built;
        try {
            built = build_nu_proposal(p);
        } catch (const ModeNotFound&) {
            continue;
        }
        ++checked;
        const auto& g = built.proposal;
        const double l2 = nu_log_target_d2(built.mode, p);
        ASSERT_NEAR((g.alpha_star - 1.0) / g.beta_star, built.mode, 1e-10 * built.mode);
        ASSERT_NEAR(-(g.alpha_star - 1.0) / (built.mode * built.mode), l2, 1e-10 * std::fabs(l2));
    }
    EXPECT_GT(checked, 9000);
}

TEST(NuProposal, IndependenceChainIsStationary) {
    const auto q = random_scales(40, 2.0, 6);
    const auto p = NuTargetParams::from_scales(q, 2.0, 0.1);
    const auto g = build_nu_proposal(p).proposal;
    RngStream rng(7);
    double nu = 2.0;
    std::vector<double> chain;
    chain.reserve(1000000);
    for (int t = 0; t < 1000000; ++t) {
        const double prop = sample_gamma(g.alpha_star, g.beta_star, rng);
        if (mh_accept(nu_log_target(prop, p), g.log_density(prop), nu_log_target(nu, p), g.log_density(nu),
                      rng.uniform()))
            nu = prop;
        chain.push_back(nu);
    }
    // Grid-normalized target CDF.
    const double lo = 1e-4, hi = 200.0, step = 1e-3;
    std::vector<double> xs, cdf;
    const double ref = nu_log_target(build_nu_proposal(p).mode, p);
    double acc = 0.0;
    for (double x = lo; x <= hi; x += step) {
        acc += std::exp(nu_log_target(x + 0.5 * step, p) - ref) * step;
        xs.push_back(x + step);
        cdf.push_back(acc);
    }
    for (auto& c : cdf) c /= acc;
    const double d = robit::testing::ks_statistic(chain, [&](double v) {
        if (v <= lo) return 0.0;
        if (v >= xs.back()) return 1.0;
        const auto k = static_cast<std::size_t>((v - lo) / step);
        return cdf[std::min(k, cdf.size() - 1)];
    });
    EXPECT_LT(d, 0.01);
}

TEST(QTarget, ConjugateModeAtZeroCross) {
    const QTargetParams p(4.0, 0.0, 3.0);
    EXPECT_DOUBLE_EQ(q_mode(p), 0.5);
    EXPECT_NEAR(q_log_target_d1(0.5, p), 0.0, 1e-15);
    const auto g = build_q_proposal(p);
    EXPECT_NEAR(g.alpha_star, 2.0, 1e-14);
    EXPECT_NEAR(g.beta_star, 2.0, 1e-14);
}

TEST(QTarget, FixedProposalForSmallDof) {
    const auto g = build_q_proposal(QTargetParams(3.0, 0.8, 0.7));
    EXPECT_EQ(g.alpha_star, 1.0);
    EXPECT_EQ(g.beta_star, 1.5);
    const auto g1 = build_q_proposal(QTargetParams(5.0, -2.0, 1.0));
    EXPECT_EQ(g1.alpha_star, 1.0);
    EXPECT_EQ(g1.beta_star, 2.5);
    EXPECT_THROW(q_mode(QTargetParams(3.0, 0.8, 0.7)), NumericalError);
}

TEST(QTarget, ModeAndCurvatureIdentitiesOnRandomTargets) {
    RngStream rng(8);
    for (int t = 0; t < 10000; ++t) {
        const double nu = 1.0 + 1e-3 + 30.0 * rng.uniform();
        const double u = nu + 20.0 * rng.exponential();
        const double c = 10.0 * rng.normal();
        const QTargetParams p(u, c, nu);
        const double m = q_mode(p);
        ASSERT_LT(std::fabs(q_log_target_d1(m, p)), 1e-8 * std::max(1.0, u));
        const auto g = build_q_proposal(p);
        ASSERT_NEAR((g.alpha_star - 1.0) / g.beta_star, m, 1e-10 * m);
        const double f2 = q_log_target_d2(m, p);
        ASSERT_NEAR(-(g.alpha_star - 1.0) / (m * m), f2, 1e-10 * std::fabs(f2));
        ASSERT_GT(g.alpha_star, 1.0);
    }
}

TEST(QTarget, DerivativesMatchFiniteDifferences) {
    RngStream rng(9);
    for (int t = 0; t < 1000; ++t) {
        const QTargetParams p(3.0 + 10.0 * rng.uniform(), 4.0 * rng.normal(), 0.5 + 2.5 * rng.uniform(), 1);
        const double q = 0.05 + 5.0 * rng.uniform();
        const double h = 1e-5 * q;
        const double fd1 = (q_log_target(q + h, p) - q_log_target(q - h, p)) / (2 * h);
        const double fd2 = (q_log_target_d1(q + h, p) - q_log_target_d1(q - h, p)) / (2 * h);
        ASSERT_NEAR(q_log_target_d1(q, p), fd1, 1e-6 * std::max(1.0, std::fabs(fd1)));
        ASSERT_NEAR(q_log_target_d2(q, p), fd2, 1e-6 * std::max(1.0, std::fabs(fd2)));
    }
}

TEST(QTarget, RejectsInconsistentParameters) {
    EXPECT_THROW(QTargetParams(1.0, 0.0, 2.0), InvalidArgument);
    EXPECT_THROW(QTargetParams(0.0, 0.0, 0.0), InvalidArgument);
    EXPECT_THROW(q_log_target(0.0, QTargetParams(3.0, 0.0, 2.0)), InvalidArgument);
}

TEST(MhAccept, Rules) {
    RngStream rng(10);
    for (int t = 0; t < 1000; ++t) EXPECT_TRUE(mh_accept(1.0, 2.0, 3.0, 4.0, rng.uniform()));
    const double ninf = -std::numeric_limits<double>::infinity();
    for (int t = 0; t < 1000; ++t) EXPECT_FALSE(mh_accept(ninf, 0.0, 0.0, 0.0, rng.uniform()));
    EXPECT_FALSE(mh_accept(ninf, ninf, 0.0, 0.0, 0.5));
    EXPECT_THROW(mh_accept(NAN, 0.0, 0.0, 0.0, 0.5), NumericalError);
    std::size_t accepted = 0;
    const int n = 1000000;
    for (int t = 0; t < n; ++t) accepted += mh_accept(std::log(0.3), 0.0, 0.0, 0.0, rng.uniform());
    EXPECT_NEAR(static_cast<double>(accepted) / n, 0.3, 0.002);
}

} // namespace
