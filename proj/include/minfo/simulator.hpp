#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "minfo/information.hpp"
#include "minfo/markov.hpp"
#include "minfo/solver.hpp"

namespace minfo {

struct RolloutStats {
    std::size_t steps = 0;
    std::size_t burn_in = 0;
    std::uint64_t seed = 0;
    std::size_t period = 1;
    bool started_stationary = true;

    double cost_mean = 0.0;  ///< per phase step
    /// batch-means standard error; batches span `batch_cycles` policy cycles
    double standard_error = 0.0;
    std::size_t batch_cycles = 1;
    std::size_t batches = 0;
    /// standard error from one-cycle batches, which ignores correlation between cycles
    double per_cycle_standard_error = 0.0;

    /// empirical state occupancy per phase of the policy cycle
    std::vector<Vector> occupancy;
    /// plug-in estimates in nats; biased upward for short runs
    double obs_info = 0.0;
    double clock_info = 0.0;
};

namespace detail {

inline Matrix row_cdf(const Matrix& m) {
    Matrix c = m;
    for (Eigen::Index r = 0; r < c.rows(); ++r) {
        for (Eigen::Index k = 1; k < c.cols(); ++k) c(r, k) += c(r, k - 1);
        c(r, c.cols() - 1) = std::numeric_limits<double>::infinity();
    }
    return c;
}

// I[x;y] in nats from a count table
inline double plugin_mutual_information(const Matrix& counts) {
    const double n = counts.sum();
    if (!(n > 0.0)) return 0.0;
    const Vector rows = counts.rowwise().sum(), cols = counts.colwise().sum().transpose();
    double mi = 0.0;
    for (Eigen::Index i = 0; i < counts.rows(); ++i)
        for (Eigen::Index j = 0; j < counts.cols(); ++j) {
            const double c = counts(i, j);
            if (c > 0.0) mi += c / n * std::log(c * n / (rows[i] * cols[j]));
        }
    return std::max(0.0, mi);
}

inline double standard_error_of(const std::vector<double>& means) {
    const auto k = means.size();
    if (k < 2) return std::numeric_limits<double>::infinity();
    const double mean = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(k);
    double ss = 0.0;
    for (double m : means) ss += (m - mean) * (m - mean);
    return std::sqrt(ss / static_cast<double>(k - 1) / static_cast<double>(k));
}

}  // namespace detail

/// Samples s -> o -> a -> s' for `burn_in + steps` phase steps and collects
/// statistics over the last `steps`. The initial state is drawn from the
/// analytic stationary marginal of phase 0; if that is unavailable the start
/// is uniform and at least 1000 burn-in steps are taken.
inline RolloutStats rollout(const PeriodicPomdpModel& model, const ReactivePolicy& policy, std::size_t steps,
                            std::size_t burn_in, std::uint64_t seed) {
    check_policy(model, policy);
    const auto T = policy.period();
    const auto S = model.num_states(), O = model.num_observations(), A = model.num_actions();
    if (steps < T) throw std::invalid_argument("rollout: steps must cover at least one policy cycle");

    RolloutStats st;
    st.steps = steps;
    st.seed = seed;
    st.period = T;

    Vector start;
    try {
        start = stationary_phase_distributions(model, policy).at(0);
    } catch (const NonConvergence&) {
        start = Vector::Constant(S, 1.0 / static_cast<double>(S));
        st.started_stationary = false;
        burn_in = std::max<std::size_t>(burn_in, 1000);
    }
    st.burn_in = burn_in;

    std::vector<Matrix> obs_cdf, act_cdf;
    std::vector<std::vector<Matrix>> trans_cdf;
    for (std::size_t t = 0; t < T; ++t) {
        const auto& m = model.phase(t);
        obs_cdf.push_back(detail::row_cdf(m.observation()));
        act_cdf.push_back(detail::row_cdf(policy.kernel(t)));
        std::vector<Matrix> tr;
        for (std::size_t a = 0; a < A; ++a) tr.push_back(detail::row_cdf(m.transition(a)));
        trans_cdf.push_back(std::move(tr));
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    auto draw = [&](const Matrix& cdf, std::size_t r) {
        const double u = uniform(rng);
        const auto n = static_cast<std::size_t>(cdf.cols());
        for (std::size_t i = 0; i + 1 < n; ++i)
            if (u < cdf(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i))) return i;
        return n - 1;
    };

    std::size_t s = 0;
    {
        const double u = uniform(rng);
        double acc = 0.0;
        s = S - 1;
        for (std::size_t i = 0; i < S; ++i) {
            acc += start[static_cast<Eigen::Index>(i)];
            if (u < acc) {
                s = i;
                break;
            }
        }
    }

    st.occupancy.assign(T, Vector::Zero(S));
    std::vector<Matrix> joint(T, Matrix::Zero(O, A));
    std::vector<double> cycle_means;
    cycle_means.reserve(steps / T + 1);
    double total = 0.0, cycle_sum = 0.0;
    std::size_t cycle_len = 0;

    const auto horizon = burn_in + steps;
    for (std::size_t k = 0; k < horizon; ++k) {
        const auto t = k % T;
        const auto& m = model.phase(t);
        const auto o = draw(obs_cdf[t], s);
        const auto a = draw(act_cdf[t], o);
        if (k >= burn_in) {
            const double c = m.cost()(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a));
            total += c;
            st.occupancy[t][static_cast<Eigen::Index>(s)] += 1.0;
            joint[t](static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(a)) += 1.0;
            cycle_sum += c;
            if (++cycle_len == T) {
                cycle_means.push_back(cycle_sum / static_cast<double>(T));
                cycle_sum = 0.0;
                cycle_len = 0;
            }
        }
        s = draw(trans_cdf[t][a], s);
    }

    st.cost_mean = total / static_cast<double>(steps);
    for (auto& occ : st.occupancy) {
        const double n = occ.sum();
        if (n > 0.0) occ /= n;
    }

    st.per_cycle_standard_error = detail::standard_error_of(cycle_means);
    const auto cycles = cycle_means.size();
    st.batch_cycles = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(cycles))));
    std::vector<double> batch_means;
    for (std::size_t i = 0; i + st.batch_cycles <= cycles; i += st.batch_cycles)
        batch_means.push_back(std::accumulate(cycle_means.begin() + static_cast<std::ptrdiff_t>(i),
                                              cycle_means.begin() + static_cast<std::ptrdiff_t>(i + st.batch_cycles), 0.0) /
                              static_cast<double>(st.batch_cycles));
    st.batches = batch_means.size();
    st.standard_error = detail::standard_error_of(batch_means);

    Matrix phase_action = Matrix::Zero(T, A);
    for (std::size_t t = 0; t < T; ++t) {
        st.obs_info += detail::plugin_mutual_information(joint[t]);
        phase_action.row(static_cast<Eigen::Index>(t)) = joint[t].colwise().sum();
    }
    st.obs_info /= static_cast<double>(T);
    st.clock_info = T > 1 ? detail::plugin_mutual_information(phase_action) : 0.0;
    return st;
}

struct CrosscheckReport {
    double analytic_cost = 0.0;
    double empirical_cost = 0.0;
    double cost_z = 0.0;
    /// sup over phases and states of |empirical - analytic| occupancy
    double occupancy_deviation = 0.0;
    double occupancy_tolerance = 0.0;
    bool cost_flagged = false;
    bool occupancy_flagged = false;

    bool flagged() const { return cost_flagged || occupancy_flagged; }
};

/// Compares rollout statistics with the analytic stationary solution of the
/// same policy. Phases are aligned on absolute time over the common period.
/// With `occupancy_tolerance` <= 0 the tolerance is max(0.05, 5/sqrt(cycles)).
inline CrosscheckReport crosscheck(const PeriodicPomdpModel& model, const ReactivePolicy& policy,
                                   const RolloutStats& stats, const SolverState& analytic,
                                   double z_limit = 3.0, double occupancy_tolerance = 0.0) {
    CrosscheckReport r;
    r.analytic_cost = external_cost(model, policy, analytic.dist);
    r.empirical_cost = stats.cost_mean;
    r.cost_z = std::isfinite(stats.standard_error) && stats.standard_error > 0.0
                   ? (stats.cost_mean - r.analytic_cost) / stats.standard_error
                   : (stats.cost_mean == r.analytic_cost ? 0.0 : std::numeric_limits<double>::infinity());
    r.cost_flagged = std::abs(r.cost_z) > z_limit;

    const auto L = std::lcm(stats.occupancy.size(), analytic.dist.period());
    for (std::size_t t = 0; t < L; ++t)
        r.occupancy_deviation = std::max(
            r.occupancy_deviation,
            (stats.occupancy[t % stats.occupancy.size()] - analytic.dist.at(t)).cwiseAbs().maxCoeff());
    const double cycles = static_cast<double>(stats.steps) / static_cast<double>(stats.period);
    r.occupancy_tolerance = occupancy_tolerance > 0.0 ? occupancy_tolerance : std::max(0.05, 5.0 / std::sqrt(cycles));
    r.occupancy_flagged = r.occupancy_deviation > r.occupancy_tolerance;
    return r;
}

}  // namespace minfo
