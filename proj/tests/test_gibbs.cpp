#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "property_checks.hpp"
#include "robit/gibbs.hpp"

namespace {

using namespace robit;
namespace rt = robit::testing;

/// One observation of J = 3 whose design rows are the identity (K = 2).
ChoiceDataset identity_design(int choice = 0) {
    ObservedAttributes obs(1, 3, 2);
    obs(0, 0, 0) = 1.0;
    obs(0, 1, 1) = 1.0;
    const std::vector<int> y{choice};
    return build_dataset(obs, y, 2);
}

ParameterState state_for(const ChoiceDataset& d, const ModelSpec& spec) {
    ParameterState s;
    s.beta = Vector::Zero(static_cast<Eigen::Index>(d.n_coef));
    s.Sigma = Matrix::Identity(static_cast<Eigen::Index>(d.n_dim()), static_cast<Eigen::Index>(d.n_dim()));
    s.nu = Vector::Constant(static_cast<Eigen::Index>(spec.n_dof()), 5.0);
    s.q = RowMatrix::Ones(static_cast<Eigen::Index>(d.n_obs), static_cast<Eigen::Index>(spec.n_scale_groups()));
    s.w = RowMatrix::Zero(static_cast<Eigen::Index>(d.n_obs), static_cast<Eigen::Index>(d.n_dim()));
    return s;
}

TEST(LatentConditional, IdentityCovarianceGivesRegressionMean) {
    const auto d = identity_design();
    const auto spec = ModelSpec::make(Kernel::MNP, 2, 3);
    auto s = state_for(d, spec);
    s.beta << 0.3, -0.7;
    s.w(0, 0) = 1.0;
    s.w(0, 1) = 0.2;
    const auto c = latent_conditional(s, d, spec, 0, 1);
    EXPECT_DOUBLE_EQ(c.mean, -0.7);
    EXPECT_DOUBLE_EQ(c.variance, 1.0);
    EXPECT_DOUBLE_EQ(c.upper, 1.0);
}

TEST(LatentConditional, CorrelatedExample) {
    const auto d = identity_design(1);
    const auto spec = ModelSpec::make(Kernel::MNP, 2, 3);
    auto s = state_for(d, spec);
    s.Sigma << 1.0, 0.5, 0.5, 1.0;
    s.w(0, 1) = 1.0;
    const auto c = latent_conditional(s, d, spec, 0, 0);
    EXPECT_NEAR(c.mean, 0.5, 1e-15);
    EXPECT_NEAR(c.variance, 0.75, 1e-15);
    EXPECT_EQ(c.lower, -std::numeric_limits<double>::infinity());
    EXPECT_EQ(c.upper, 1.0);
}

TEST(LatentConditional, MnrAtUnitScaleEqualsMnp) {
    const auto d = identity_design(2);
    auto s = state_for(d, ModelSpec::make(Kernel::MNR, 2, 3));
    s.Sigma << 1.3, -0.4, -0.4, 0.7;
    s.beta << 0.2, 0.1;
    s.w(0, 0) = -0.4;
    s.w(0, 1) = -1.1;
    for (std::size_t j = 0; j < 2; ++j) {
        const auto a = latent_conditional(s, d, ModelSpec::make(Kernel::MNR, 2, 3), 0, j);
        const auto b = latent_conditional(s, d, ModelSpec::make(Kernel::MNP, 2, 3), 0, j);
        EXPECT_EQ(a.mean, b.mean);
        EXPECT_EQ(a.variance, b.variance);
    }
}

TEST(LatentConditional, MatchesCovarianceSchurComplement) {
    for (Kernel kernel : {Kernel::MNP, Kernel::MNR, Kernel::GenMNR}) {
        auto problem = rt::tiny_problem(kernel, 5, 5, 3, 31);
        RngStream rng(31);
        const std::size_t D = problem.data.n_dim();
        const auto group = problem.spec.group_of_dim(D);
        for (int t = 0; t < 50; ++t) {
            auto s = rt::random_state(problem.data, problem.spec, rng);
            if (kernel == Kernel::MNP) s.q.setOnes();
            for (std::size_t i = 0; i < problem.data.n_obs; ++i) {
                Vector qd(static_cast<Eigen::Index>(D));
                for (std::size_t k = 0; k < D; ++k) qd[k] = s.q(i, group[k]);
                const Matrix C = rt::scaled_covariance(s.Sigma, qd);
                const Vector mu = problem.data.design(i) * s.beta;
                for (std::size_t j = 0; j < D; ++j) {
                    std::vector<Eigen::Index> rest;
                    for (std::size_t k = 0; k < D; ++k)
                        if (k != j) rest.push_back(static_cast<Eigen::Index>(k));
                    const auto r = static_cast<Eigen::Index>(rest.size());
                    Matrix Crr(r, r);
                    Vector cjr(r), dev(r);
                    for (Eigen::Index a = 0; a < r; ++a) {
                        cjr[a] = C(static_cast<Eigen::Index>(j), rest[a]);
                        dev[a] = s.w(i, rest[a]) - mu[rest[a]];
                        for (Eigen::Index b = 0; b < r; ++b) Crr(a, b) = C(rest[a], rest[b]);
                    }
                    const Vector h = Crr.ldlt().solve(cjr);
                    const double mean = mu[j] + h.dot(dev);
                    const double var = C(j, j) - h.dot(cjr);
                    const auto c = latent_conditional(s, problem.data, problem.spec, i, j);
                    ASSERT_NEAR(c.mean, mean, 1e-10 * (1.0 + std::fabs(mean)));
                    ASSERT_NEAR(c.variance, var, 1e-10 * var);
                }
            }
        }
    }
}

TEST(LatentUtilities, DrawsStayConsistentWithChoices) {
    for (Kernel kernel : {Kernel::MNP, Kernel::MNR, Kernel::GenMNR}) {
        auto problem = rt::tiny_problem(kernel, 40, 4, 2, 32);
        ChainConfig cfg;
        RngStream rng(32);
        auto s = initial_state(problem.data, problem.spec, cfg, rng);
        NuProposalMemory memory;
        for (int t = 0; t < 500; ++t) {
            gibbs_sweep(s, problem.data, problem.spec, rng, memory, nullptr, {std::nullopt, false, true});
            ASSERT_NEAR(s.Sigma.trace(), 3.0, 1e-10);
            ASSERT_TRUE((s.q.array() > 0.0).all());
        }
    }
}

TEST(LatentUtilities, SingleCoordinateMatchesTruncatedNormal) {
    // With Σ = I and β = 0, w of a chosen dimension is N(0,1) truncated below
    // at max(0, other w); fix the other at −1 so the bound is 0.
    const auto d = identity_design(0);
    const auto spec = ModelSpec::make(Kernel::MNP, 2, 3);
    auto s = state_for(d, spec);
    RngStream rng(33);
    std::vector<double> draws;
    for (int t = 0; t < 20000; ++t) {
        s.w(0, 0) = 1.0;
        s.w(0, 1) = -1.0;
        update_latent_utilities(s, d, spec, rng);
        draws.push_back(s.w(0, 0));
    }
    // First coordinate is drawn first, so it sees w₂ = −1: half-normal, mean √(2/π).
    EXPECT_NEAR(rt::mean(draws), std::sqrt(2.0 / M_PI), 4.0 * std::sqrt((1.0 - 2.0 / M_PI) / draws.size()));
}

TEST(QStep, MnrConditionalParameters) {
    const auto [shape, rate] = mnr_q_conditional(4.0, 2, 2.0);
    EXPECT_DOUBLE_EQ(shape, 3.0);
    EXPECT_DOUBLE_EQ(rate, 3.0);
}

TEST(QStep, MnrDensityMatchesOracle) { EXPECT_LT(rt::mnr_q_density_error(), 1e-8); }

TEST(QStep, GenMnrDensityMatchesOracle) {
    EXPECT_LT(rt::genmnr_q_density_error(), 1e-8);
    EXPECT_LT(rt::genmnr_q_density_error(20, 34, {2, 1}), 1e-8);
    EXPECT_LT(rt::genmnr_q_density_error(20, 35, {3}), 1e-8);
}

TEST(QStep, MnrSampleMeanMatchesGammaMean) {
    auto problem = rt::tiny_problem(Kernel::MNR, 1, 3, 2, 36);
    auto s = state_for(problem.data, problem.spec);
    s.w(0, 0) = 0.8;
    s.w(0, 1) = -0.3;
    const double quad = 0.8 * 0.8 + 0.3 * 0.3;
    RngStream rng(36);
    std::vector<double> q;
    for (int t = 0; t < 100000; ++t) {
        update_q_mnr(s, problem.data, rng);
        q.push_back(s.q(0, 0));
    }
    const double shape = 0.5 * (5.0 + 2.0), rate = 0.5 * (5.0 + quad);
    EXPECT_NEAR(rt::mean(q), shape / rate, 4.0 * std::sqrt(shape / (rate * rate) / q.size()));
}

TEST(QStep, GenMnrWithDiagonalSigmaAcceptsAlmostAlways) {
    // Diagonal Σ gives c = 0, where the matched Gamma is the exact conditional.
    auto problem = rt::tiny_problem(Kernel::GenMNR, 200, 4, 2, 37);
    ChainConfig cfg;
    RngStream rng(37);
    auto s = initial_state(problem.data, problem.spec, cfg, rng);
    SamplerTelemetry tel;
    for (int t = 0; t < 50; ++t) update_q_genmnr(s, problem.data, problem.spec, rng, &tel);
    EXPECT_GT(tel.mh_accept_rate_q(), 0.999);
}

TEST(BetaStep, EmptyDataGivesPrior) {
    ObservedAttributes obs(0, 3, 2);
    const std::vector<int> y;
    const auto d = build_dataset(obs, y, 2);
    auto spec = ModelSpec::make(Kernel::MNP, 2, 3);
    spec.priors.B0 << 4.0, 0.0, 0.0, 0.25;
    auto s = state_for(d, spec);
    RngStream rng(38);
    std::vector<double> b0, b1;
    for (int t = 0; t < 40000; ++t) {
        update_beta(s, d, spec, rng);
        b0.push_back(s.beta[0]);
        b1.push_back(s.beta[1]);
    }
    EXPECT_NEAR(rt::mean(b0), 0.0, 4.0 * 0.5 / 200.0);
    EXPECT_NEAR(rt::variance(b0), 0.25, 0.25 * 0.04);
    EXPECT_NEAR(rt::variance(b1), 4.0, 4.0 * 0.04);
}

TEST(BetaStep, MnrAtUnitScaleEqualsMnp) {
    auto problem = rt::tiny_problem(Kernel::MNR, 30, 3, 2, 39);
    RngStream init(39);
    auto s = rt::random_state(problem.data, problem.spec, init);
    s.q.setOnes();
    auto a = s, b = s;
    RngStream r1(40), r2(40);
    update_beta(a, problem.data, problem.spec, r1);
    auto mnp = problem.spec;
    mnp.kernel = Kernel::MNP;
    update_beta(b, problem.data, mnp, r2);
    EXPECT_EQ(a.beta, b.beta);
}

TEST(BetaStep, SingleObservationWeightedLeastSquaresLimit) {
    const auto d = identity_design();
    auto spec = ModelSpec::make(Kernel::MNP, 2, 3);
    spec.priors.B0 = 1e-10 * Matrix::Identity(2, 2);
    auto s = state_for(d, spec);
    s.w(0, 0) = 0.9;
    s.w(0, 1) = -0.4;
    RngStream rng(41);
    std::vector<double> b0, b1;
    for (int t = 0; t < 40000; ++t) {
        update_beta(s, d, spec, rng);
        b0.push_back(s.beta[0]);
        b1.push_back(s.beta[1]);
    }
    // Posterior is N(w, Σ) in the limit.
    EXPECT_NEAR(rt::mean(b0), 0.9, 4.0 / 200.0);
    EXPECT_NEAR(rt::mean(b1), -0.4, 4.0 / 200.0);
    EXPECT_NEAR(rt::variance(b0), 1.0, 0.04);
}

TEST(SigmaStep, TraceResidualAndChoiceInvariants) {
    for (Kernel kernel : {Kernel::MNP, Kernel::MNR, Kernel::GenMNR}) {
        auto problem = rt::tiny_problem(kernel, 60, 4, 2, 42);
        ChainConfig cfg;
        RngStream rng(42);
        auto s = initial_state(problem.data, problem.spec, cfg, rng);
        int moved = 0;
        for (int t = 0; t < 200; ++t) {
            const RowMatrix z_before = [&] {
                RowMatrix z = s.w;
                for (std::size_t i = 0; i < problem.data.n_obs; ++i)
                    z.row(static_cast<Eigen::Index>(i)) -= (problem.data.design(i) * s.beta).transpose();
                return z;
            }();
            const double alpha = update_sigma(s, problem.data, problem.spec, rng);
            moved += alpha != 1.0;
            ASSERT_NEAR(s.Sigma.trace(), 3.0, 1e-10);
            for (std::size_t i = 0; i < problem.data.n_obs; ++i) {
                const Vector resid = s.w.row(static_cast<Eigen::Index>(i)).transpose() - problem.data.design(i) * s.beta;
                for (Eigen::Index k = 0; k < resid.size(); ++k)
                    ASSERT_NEAR(resid[k], z_before(static_cast<Eigen::Index>(i), k) / alpha, 1e-12);
            }
            EXPECT_NO_THROW(check_state_invariants(s, problem.data));
        }
        EXPECT_GT(moved, 150);
    }
}

TEST(RunChain, RetainsThinnedDraws) {
    auto problem = rt::tiny_problem(Kernel::MNR, 20);
    ChainConfig cfg;
    cfg.total_iterations = 100;
    cfg.warmup = 50;
    cfg.thin = 10;
    const auto fit = run_chains(problem.spec, problem.data, cfg);
    ASSERT_FALSE(fit.aborted());
    EXPECT_EQ(fit.draws.n_retained(), 5u);
    EXPECT_EQ(fit.draws.iterations[0], (std::vector<std::size_t>{60, 70, 80, 90, 100}));
    EXPECT_EQ(fit.draws.names.back(), "nu");
}

TEST(RunChain, DeterministicUnderFixedSeed) {
    auto problem = rt::tiny_problem(Kernel::GenMNR, 20);
    ChainConfig cfg;
    cfg.total_iterations = 300;
    cfg.warmup = 100;
    cfg.thin = 2;
    cfg.n_chains = 3;
    const auto a = run_chains(problem.spec, problem.data, cfg);
    const auto b = run_chains(problem.spec, problem.data, cfg);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(a.draws.chains[c], b.draws.chains[c]);
    EXPECT_NE(a.draws.chains[0], a.draws.chains[1]);
    cfg.n_chains = 1;
    const auto single = run_chains(problem.spec, problem.data, cfg);
    EXPECT_EQ(single.draws.chains[0], a.draws.chains[0]);
}

TEST(RunChain, AbortReportsChainAndIteration) {
    auto problem = rt::tiny_problem(Kernel::MNP, 10);
    problem.data.X[3] = std::numeric_limits<double>::infinity();
    ChainConfig cfg;
    cfg.total_iterations = 20;
    cfg.warmup = 10;
    cfg.thin = 1;
    const auto fit = run_chains(problem.spec, problem.data, cfg);
    ASSERT_TRUE(fit.aborted());
    EXPECT_EQ(fit.errors[0]->chain(), 0u);
    EXPECT_THROW(fit.rethrow_if_aborted(), ChainAborted);
}

TEST(RunChain, PackAndUnpackRoundTrip) {
    const Vector beta = (Vector(3) << 1.0, 2.0, 3.0).finished();
    Matrix Sigma(2, 2);
    Sigma << 1.2, 0.3, 0.3, 0.8;
    const Vector nu = (Vector(2) << 4.0, 9.0).finished();
    std::vector<double> row(3 + 3 + 2);
    pack_parameters(beta, Sigma, nu, row.data());
    const auto m = unpack_parameters(row.data(), 3, 2, 2);
    EXPECT_EQ(m.beta, beta);
    EXPECT_EQ(m.Sigma, Sigma);
    EXPECT_EQ(m.nu, nu);
}

TEST(Properties, KernelReductionMatchesMnp) {
    const auto r = rt::kernel_reduction();
    for (std::size_t k = 0; k < r.names.size(); ++k) EXPECT_GT(r.pvalues[k], 0.001) << r.names[k];
}

class Geweke : public ::testing::TestWithParam<Kernel> {};

TEST_P(Geweke, MomentsMatchWithinFourStandardErrors) {
    const auto report = rt::geweke_test(GetParam(), 400000, 1000000);
    EXPECT_TRUE(report.trace_ok);
    for (const auto& row : report.rows)
        EXPECT_LT(std::fabs(row.z), 4.0) << row.name << " successive " << row.successive << " marginal " << row.marginal;
}

INSTANTIATE_TEST_SUITE_P(AllKernels, Geweke, ::testing::Values(Kernel::MNP, Kernel::MNR, Kernel::GenMNR),
                         [](const auto& info) { return std::string(to_string(info.param)); });

} // namespace
