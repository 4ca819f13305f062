#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"

using namespace minfo;

namespace {

SolverOptions at_beta(double beta, std::uint64_t seed = 0) {
    SolverOptions o;
    o.beta = beta;
    o.rng_seed = seed;
    return o;
}

double max_deviation_from_uniform(const ReactivePolicy& pi) {
    double dev = 0.0;
    for (const auto& k : pi.kernels())
        dev = std::max(dev, (k.array() - 1.0 / static_cast<double>(k.cols())).abs().maxCoeff());
    return dev;
}

// free energy straight from the definitions: plug-in MI of sigma_t(o) pi_t(a|o)
// and a naive cost sum over the stationary marginals
double reference_free_energy(const PomdpModel& base, const ReactivePolicy& pi, const PhaseDistribution& d,
                             double beta) {
    const auto raw = base.raw();
    const auto S = raw.states.size(), O = raw.observations.size(), A = raw.actions.size();
    const auto T = pi.period();
    double info = 0.0, cost = 0.0;
    Matrix phase_action = Matrix::Zero(T, A);
    for (std::size_t t = 0; t < T; ++t) {
        Matrix joint = Matrix::Zero(O, A);
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t o = 0; o < O; ++o)
                for (std::size_t a = 0; a < A; ++a) {
                    const double w = d.at(t)[s] * raw.observation[s][o] * pi.kernel(t)(o, a);
                    joint(o, a) += w;
                    cost += w * raw.cost[s][a];
                }
        info += oracle::mutual_information(joint);
        phase_action.row(t) = joint.colwise().sum() / static_cast<double>(T);
    }
    info = info / static_cast<double>(T) + oracle::mutual_information(phase_action);
    return info / beta + cost / static_cast<double>(T);
}

double conditional_entropy(const ReactivePolicy& pi, const BeliefTable& b) {
    double h = 0.0;
    for (std::size_t t = 0; t < pi.period(); ++t)
        for (Eigen::Index o = 0; o < pi.kernel(t).rows(); ++o)
            for (Eigen::Index a = 0; a < pi.kernel(t).cols(); ++a) {
                const double p = pi.kernel(t)(o, a);
                if (p > 0.0) h -= b.obs_marginals[t][o] * p * std::log(p);
            }
    return h / static_cast<double>(pi.period());
}

}  // namespace

TEST(Values, ZeroCostUniformPolicy) {
    auto raw = builtins::robot().raw();
    for (auto& row : raw.cost) std::fill(row.begin(), row.end(), 0.0);
    const PeriodicPomdpModel m = PomdpModel(raw);
    const auto e = evaluate_policy(m, ReactivePolicy::uniform(m, 1), 1.0, InfoVariant::plain);
    EXPECT_LT(e.state.values.nu[0].cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_NEAR(e.state.values.phi[0], 0.0, 1e-14);
}

TEST(Values, TwoStateUniformPolicy) {
    const PeriodicPomdpModel m = builtins::two_state();
    const auto e = evaluate_policy(m, ReactivePolicy::uniform(m, 1), 1.0, InfoVariant::clock_aware);
    EXPECT_LT(e.state.values.nu[0].cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_NEAR(e.state.values.phi[0], -0.5, 1e-14);
}

TEST(Values, RobotUniformPolicy) {
    const auto robot = builtins::robot();
    const PeriodicPomdpModel m = robot;
    const auto pi = ReactivePolicy::uniform(m, 1);
    const auto e = evaluate_policy(m, pi, 2.0, InfoVariant::clock_aware);
    EXPECT_LT(residuals(m, pi, e.state, 2.0, InfoVariant::clock_aware).backward, 1e-10);
    EXPECT_NEAR(e.state.values.phi[0], reference_free_energy(robot, pi, e.state.dist, 2.0), 1e-9);
}

TEST(Values, GaugeAndAverageOffsetOnPeriodicPolicies) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 15; ++trial) {
        const std::size_t S = 2 + rng() % 4, O = 1 + rng() % 3, A = 2 + rng() % 2, T = 1 + rng() % 4;
        const PomdpModel base(oracle::random_raw(rng, S, O, A));
        const PeriodicPomdpModel m = base;
        std::vector<Matrix> k;
        for (std::size_t t = 0; t < T; ++t) k.push_back(oracle::random_kernel(rng, O, A));
        const ReactivePolicy pi(k);
        const double beta = 0.5 + static_cast<double>(trial);
        const auto e = evaluate_policy(m, pi, beta, InfoVariant::clock_aware);
        double mean_phi = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            EXPECT_NEAR(e.state.dist.at(t).dot(e.state.values.at(t)), 0.0, 1e-12);
            mean_phi += e.state.values.phi[t] / static_cast<double>(T);
        }
        EXPECT_NEAR(mean_phi, reference_free_energy(base, pi, e.state.dist, beta), 1e-9);
        EXPECT_NEAR(mean_phi, e.free_energy, 1e-9);
        EXPECT_LT(residuals(m, pi, e.state, beta, InfoVariant::clock_aware).backward, 1e-10);
    }
}

TEST(PolicyUpdate, ZeroBetaReturnsThePrior) {
    DistortionTable d{(Matrix(2, 3) << 1, 5, -2, 0, 3, 9).finished(), {true, true}, InfoVariant::plain};
    const Vector prior = (Vector(3) << 0.2, 0.5, 0.3).finished();
    const Matrix k = policy_update(d, prior, 0.0);
    for (int o = 0; o < 2; ++o) EXPECT_LT((k.row(o).transpose() - prior).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(PolicyUpdate, ClosedFormTwoActions) {
    DistortionTable d{(Matrix(1, 2) << 0.0, 1.0).finished(), {true}, InfoVariant::plain};
    const Matrix k = policy_update(d, Vector::Constant(2, 0.5), 1.0);
    EXPECT_NEAR(k(0, 0), 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
    EXPECT_NEAR(k(0, 0), 0.73106, 1e-5);
    EXPECT_NEAR(k(0, 1), 0.26894, 1e-5);
}

TEST(PolicyUpdate, DeterministicLimit) {
    DistortionTable d{(Matrix(1, 3) << 0.3, 0.1, 0.2).finished(), {true}, InfoVariant::plain};
    const Matrix k = policy_update(d, Vector::Constant(3, 1.0 / 3.0), 1e6);
    EXPECT_GT(k(0, 1), 1.0 - 1e-12);
    EXPECT_LT(k(0, 0) + k(0, 2), 1e-12);
}

TEST(PolicyUpdate, MasksAndDegenerateRows) {
    DistortionTable d{(Matrix(1, 3) << 0.0, 1.0, 2.0).finished(), {true}, InfoVariant::plain};
    const ActionMask mask{false, true, true};
    const Matrix k = policy_update(d, Vector::Constant(3, 1.0 / 3.0), 1.0, &mask);
    EXPECT_EQ(k(0, 0), 0.0);
    EXPECT_NEAR(k(0, 1), 1.0 / (1.0 + std::exp(-1.0)), 1e-15);

    const Vector prior = (Vector(3) << 1.0, 0.0, 0.0).finished();
    EXPECT_THROW(policy_update(d, prior, 1.0, &mask), DegenerateUpdate);
}

TEST(PolicyUpdate, UniformPriorIsSoftmax) {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(-5.0, 5.0), b(0.01, 20.0);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t O = 1 + rng() % 4, A = 2 + rng() % 5;
        DistortionTable d{Matrix(O, A), std::vector<bool>(O, true), InfoVariant::plain};
        for (std::size_t o = 0; o < O; ++o)
            for (std::size_t a = 0; a < A; ++a) d.values(o, a) = u(rng);
        const double beta = b(rng);
        const Matrix k = policy_update(d, Vector::Constant(A, 1.0 / static_cast<double>(A)), beta);
        for (std::size_t o = 0; o < O; ++o) {
            std::vector<double> row(A);
            for (std::size_t a = 0; a < A; ++a) row[a] = d.values(o, a);
            const auto ref = oracle::softmax(row, beta);
            for (std::size_t a = 0; a < A; ++a) EXPECT_NEAR(k(o, a), ref[a], 1e-12);
        }
    }
}

TEST(Solve, BelowTheBifurcationTheUniformPolicyWins) {
    const auto r = solve(builtins::two_state(), at_beta(0.5));
    EXPECT_TRUE(r.report.converged);
    EXPECT_EQ(r.report.detected_period, 1u);
    EXPECT_LT(max_deviation_from_uniform(r.policy), 1e-3);
    EXPECT_GE(r.report.external_cost, -0.51);
    EXPECT_LE(r.report.external_cost, -0.49);
}

TEST(Solve, AboveTheBifurcationMatchesTheSymmetricFamily) {
    for (double beta : {2.0, 4.0}) {
        const auto r = solve(builtins::two_state(), at_beta(beta, 7));
        ASSERT_TRUE(r.report.converged) << r.report.message;
        EXPECT_EQ(r.report.detected_period, 2u);
        const auto [eps, fe] = oracle::symmetric_family_minimum(beta);
        EXPECT_NEAR(r.report.free_energy, fe, 1e-6);
        EXPECT_NEAR(r.report.external_cost, -(0.5 + 2 * eps * eps), 1e-4);
        if (beta == 4.0) {
            EXPECT_GT(r.report.info.clock_info, 0.5 * std::log(2.0));
            EXPECT_LT(r.report.external_cost, -0.9);
        }
    }
}

TEST(Solve, UniformFixedPointIsStationaryWithoutPerturbation) {
    auto o = at_beta(2.0);
    o.perturbation_scale = 0.0;
    o.min_outer_iterations = 100;
    const auto r = solve(builtins::two_state(), o);
    EXPECT_GE(r.report.outer_iterations, 100u);
    EXPECT_LT(r.report.residuals.max(), 1e-12);
    EXPECT_LT(max_deviation_from_uniform(r.policy), 1e-12);
    EXPECT_NEAR(r.report.free_energy, -0.5, 1e-12);
}

TEST(Solve, PerturbedSaddleEscapesToPeriodTwo) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto r = solve(builtins::two_state(), at_beta(2.0, seed));
        EXPECT_EQ(r.report.detected_period, 2u);
        EXPECT_LT(r.report.free_energy, -0.5 - 1e-3);
    }
}

TEST(Solve, ConvergedSolutionsAreSelfConsistent) {
    for (const auto& name : builtins::names())
        for (double beta : {0.5, 1.5, 4.0}) {
            const PeriodicPomdpModel m = *builtins::by_name(name);
            const auto r = solve(m, at_beta(beta));
            ASSERT_TRUE(r.report.converged) << name << " beta=" << beta << ": " << r.report.message;
            EXPECT_LT(r.report.residuals.max(), 1e-6);
            const auto again = residuals(m, r.policy, r.state, beta, InfoVariant::clock_aware);
            EXPECT_LT(again.max(), 1e-6);
            EXPECT_EQ(r.report.ergodicity, Ergodicity::ergodic);
        }
}

TEST(Solve, FreeEnergyTrendsDownward) {
    for (const auto& name : builtins::names())
        for (double beta : {1.5, 4.0, 20.0}) {
            const auto r = solve(*builtins::by_name(name), at_beta(beta, 3));
            ASSERT_GE(r.report.fe_history.size(), 2u);
            EXPECT_LE(r.report.fe_history.back(), r.report.fe_history.front() + 1e-12) << name << " " << beta;
            std::size_t rises = 0;
            for (std::size_t i = 1; i < r.report.fe_history.size(); ++i)
                rises += r.report.fe_history[i] - r.report.fe_history[i - 1] > 1e-7 ? 1 : 0;
            EXPECT_EQ(rises, r.report.monotonicity_violations);
        }
}

TEST(Solve, PolicyBecomesDeterministicAtLargeBeta) {
    std::vector<double> h;
    for (double beta : {1e2, 1e3, 1e4}) {
        const auto r = solve(builtins::two_state(), at_beta(beta));
        ASSERT_TRUE(r.report.converged);
        h.push_back(conditional_entropy(r.policy, r.state.beliefs));
    }
    EXPECT_LT(h[2], 1e-3);
    for (std::size_t i = 1; i < h.size(); ++i) {
        EXPECT_LE(h[i], h[i - 1]);
        // strict wherever the larger entropy is still representable
        if (h[i - 1] > 0.0) {
            EXPECT_LT(h[i], h[i - 1]);
        }
    }
}

TEST(Solve, SeedReproducible) {
    for (const auto& name : builtins::names()) {
        const auto a = solve(*builtins::by_name(name), at_beta(6.0, 42));
        const auto b = solve(*builtins::by_name(name), at_beta(6.0, 42));
        EXPECT_EQ(a.report.free_energy, b.report.free_energy);
        EXPECT_EQ(a.report.outer_iterations, b.report.outer_iterations);
        EXPECT_EQ(a.report.fe_history, b.report.fe_history);
        ASSERT_EQ(a.policy.period(), b.policy.period());
        for (std::size_t t = 0; t < a.policy.period(); ++t) EXPECT_TRUE(a.policy.kernel(t) == b.policy.kernel(t));
    }
}

TEST(Solve, WarmStartKeepsAConvergedSolution) {
    const PeriodicPomdpModel m = builtins::two_state();
    const auto first = solve(m, at_beta(3.0));
    auto o = at_beta(3.0);
    o.perturbation_scale = 0.0;
    const auto second = solve(m, o, first.policy);
    EXPECT_TRUE(second.report.converged);
    EXPECT_EQ(second.report.detected_period, 2u);
    EXPECT_NEAR(second.report.free_energy, first.report.free_energy, 1e-10);
}

TEST(Solve, PlainVariantIgnoresClockCost) {
    auto o = at_beta(0.5);
    o.clock_aware = false;
    const auto r = solve(builtins::two_state(), o);
    // without a clock price the switcher is free: cost -1, no observation information
    EXPECT_NEAR(r.report.external_cost, -1.0, 1e-6);
    EXPECT_NEAR(r.report.free_energy, -1.0, 1e-6);
    EXPECT_EQ(r.report.detected_period, 2u);
}

TEST(Solve, RejectsInvalidOptions) {
    const PeriodicPomdpModel m = builtins::two_state();
    EXPECT_THROW(solve(m, at_beta(0.0)), std::invalid_argument);
    EXPECT_THROW(solve(m, at_beta(-1.0)), std::invalid_argument);
    auto o = at_beta(1.0);
    o.max_period = 0;
    EXPECT_THROW(solve(m, o), std::invalid_argument);
    o = at_beta(1.0);
    o.cycle_tolerance = 0.0;
    EXPECT_THROW(solve(m, o), std::invalid_argument);
}

TEST(Residuals, UniformIsAFixedPointButNotOptimalAtBetaFour) {
    const PeriodicPomdpModel m = builtins::two_state();
    const auto pi = ReactivePolicy::uniform(m, 2);
    const auto e = evaluate_policy(m, pi, 4.0, InfoVariant::clock_aware);
    // symmetry makes the uniform policy satisfy every equation; it is a saddle, not the optimum
    EXPECT_LT(residuals(m, pi, e.state, 4.0, InfoVariant::clock_aware).max(), 1e-12);
    const auto best = solve(m, at_beta(4.0));
    EXPECT_LT(best.report.free_energy, e.free_energy - 0.1);
}

TEST(Residuals, HandBuiltFixedPointAtZeroBeta) {
    const PeriodicPomdpModel m = builtins::two_state();
    const auto pi = ReactivePolicy::uniform(m, 1);
    const auto e = evaluate_policy(m, pi, 0.0, InfoVariant::clock_aware);
    const auto r = residuals(m, pi, e.state, 0.0, InfoVariant::clock_aware);
    EXPECT_LT(r.max(), 1e-12);
}
