#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include "minfo/model.hpp"
#include "minfo/policy.hpp"

namespace minfo {

/// Thrown when an iterative computation fails to reach its tolerance.
class NonConvergence : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Per-phase stationary state marginals of a periodic process.
struct PhaseDistribution {
    std::vector<Vector> marginals;

    std::size_t period() const { return marginals.size(); }
    const Vector& at(std::size_t t) const { return marginals[t % marginals.size()]; }
};

/// Observation marginals and posteriors b_t(s|o) per phase. Column o of
/// `beliefs[t]` is the posterior over states; it is only meaningful where
/// `supported[t][o]` is set.
struct BeliefTable {
    std::vector<Vector> obs_marginals;
    std::vector<Matrix> beliefs;
    std::vector<std::vector<bool>> supported;

    std::size_t period() const { return obs_marginals.size(); }
};

// observations with marginal probability at or below this are masked
inline constexpr double kSupportThreshold = 1e-14;

/// |S| x |A| matrix of P(a|s) = sum_o sigma(o|s) pi(a|o) for one phase model.
inline Matrix state_action_probs(const PomdpModel& phase_model, const Matrix& kernel) {
    return phase_model.observation() * kernel;
}

/// State-to-state kernel induced by one observation-to-action kernel in model phase `phase`.
inline Matrix policy_state_kernel(const PeriodicPomdpModel& model, const Matrix& kernel, std::size_t phase) {
    const auto& m = model.phase(phase);
    const Matrix w = state_action_probs(m, kernel);
    const auto S = m.num_states();
    Matrix P = Matrix::Zero(S, S);
    for (std::size_t a = 0; a < m.num_actions(); ++a) P += w.col(a).asDiagonal() * m.transition(a);
    return P;
}

/// State-to-state kernel P_pi(s'|s) induced by the policy at `phase`.
inline Matrix policy_state_kernel(const PeriodicPomdpModel& model, const ReactivePolicy& policy,
                                  std::size_t phase) {
    if (phase >= policy.period()) throw std::out_of_range("policy_state_kernel: phase >= period");
    return policy_state_kernel(model, policy.kernel(phase), phase);
}

/// Product of the one-step kernels over a full cycle starting at `phase`.
inline Matrix cycle_kernel(const PeriodicPomdpModel& model, const ReactivePolicy& policy, std::size_t phase) {
    const auto T = policy.period();
    Matrix K = Matrix::Identity(model.num_states(), model.num_states());
    for (std::size_t k = 0; k < T; ++k) K = K * policy_state_kernel(model, policy, (phase + k) % T);
    return K;
}

/// p_{t+1} = p_t P_{pi_t}
inline Vector forward_step(const PeriodicPomdpModel& model, const Matrix& kernel, std::size_t phase,
                           const Vector& marginal) {
    return (marginal.transpose() * policy_state_kernel(model, kernel, phase)).transpose();
}

inline Vector forward_step(const PeriodicPomdpModel& model, const ReactivePolicy& policy, std::size_t phase,
                           const Vector& marginal) {
    return forward_step(model, policy.kernel(phase), phase, marginal);
}

namespace detail {

inline Vector clean_distribution(Vector x) {
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (x[i] < 0.0) x[i] = 0.0;
    const double sum = x.sum();
    if (sum > 0.0) x /= sum;
    return x;
}

inline Vector lazy_power_iteration(const Matrix& K, double tolerance, int max_iterations) {
    const auto n = K.rows();
    const Matrix lazy = 0.5 * (K + Matrix::Identity(n, n));
    Vector x = Vector::Constant(n, 1.0 / static_cast<double>(n));
    for (int it = 0; it < max_iterations; ++it) {
        Vector next = (x.transpose() * lazy).transpose();
        next /= next.sum();
        const double change = (next - x).cwiseAbs().maxCoeff();
        x = std::move(next);
        if (change < tolerance) return x;
    }
    throw NonConvergence(concat("stationary distribution did not converge in ", max_iterations,
                                " iterations; the chain is likely not ergodic"));
}

}  // namespace detail

/// Stationary distribution of a row-stochastic kernel.
///
/// Solved directly from x (K - I) = 0, sum(x) = 1. When that system is rank
/// deficient (several closed classes) the lazy chain (K + I)/2 is power
/// iterated from the uniform distribution instead.
inline Vector stationary_distribution(const Matrix& K, double tolerance = 1e-12, int max_iterations = 100000) {
    const auto n = K.rows();
    Matrix A(n + 1, n);
    A.topRows(n) = (K - Matrix::Identity(n, n)).transpose();
    A.row(n).setOnes();
    Vector rhs = Vector::Zero(n + 1);
    rhs[n] = 1.0;
    Eigen::ColPivHouseholderQR<Matrix> qr(A);
    if (qr.rank() == n) {
        Vector x = detail::clean_distribution(qr.solve(rhs));
        const double residual = (x.transpose() * K - x.transpose()).cwiseAbs().maxCoeff();
        if (residual < std::max(tolerance, 1e-10)) return x;
    }
    return detail::lazy_power_iteration(K, tolerance, max_iterations);
}

/// Periodic stationary marginals p_t for every phase of the policy cycle.
/// p_0 is the fixed point of the cycle kernel; later phases follow from the
/// one-step forward recursion.
inline PhaseDistribution stationary_phase_distributions(const PeriodicPomdpModel& model,
                                                        const ReactivePolicy& policy,
                                                        double tolerance = 1e-12) {
    check_policy(model, policy);
    const auto T = policy.period();
    PhaseDistribution d;
    d.marginals.reserve(T);
    d.marginals.push_back(stationary_distribution(cycle_kernel(model, policy, 0), tolerance));
    for (std::size_t t = 0; t + 1 < T; ++t)
        d.marginals.push_back(detail::clean_distribution(forward_step(model, policy, t, d.marginals.back())));
    return d;
}

enum class Ergodicity { ergodic, reducible, periodic_chain };

inline const char* to_string(Ergodicity e) {
    switch (e) {
        case Ergodicity::ergodic: return "ergodic";
        case Ergodicity::reducible: return "reducible";
        case Ergodicity::periodic_chain: return "periodic-chain";
    }
    return "unknown";
}

struct ErgodicityReport {
    Ergodicity diagnosis = Ergodicity::ergodic;
    /// states that cannot be reached from at least one other state
    std::vector<std::size_t> unreachable;
    /// period of the cycle-kernel chain when irreducible
    std::size_t chain_period = 1;
};

/// Reachability analysis of the cycle-kernel chain (phase 0).
inline ErgodicityReport ergodicity_check(const PeriodicPomdpModel& model, const ReactivePolicy& policy) {
    const Matrix K = cycle_kernel(model, policy, 0);
    const auto n = static_cast<std::size_t>(K.rows());
    auto reach = [&](std::size_t from) {
        std::vector<bool> seen(n, false);
        std::queue<std::size_t> q;
        seen[from] = true;
        q.push(from);
        while (!q.empty()) {
            auto u = q.front();
            q.pop();
            for (std::size_t v = 0; v < n; ++v)
                if (K(u, v) > 0.0 && !seen[v]) {
                    seen[v] = true;
                    q.push(v);
                }
        }
        return seen;
    };

    ErgodicityReport r;
    std::vector<bool> flagged(n, false);
    for (std::size_t u = 0; u < n; ++u) {
        auto seen = reach(u);
        for (std::size_t v = 0; v < n; ++v)
            if (!seen[v]) flagged[v] = true;
    }
    for (std::size_t v = 0; v < n; ++v)
        if (flagged[v]) r.unreachable.push_back(v);
    if (!r.unreachable.empty()) {
        r.diagnosis = Ergodicity::reducible;
        return r;
    }

    // irreducible: period is the gcd of level differences along edges of a BFS tree
    std::vector<long> level(n, -1);
    std::queue<std::size_t> q;
    level[0] = 0;
    q.push(0);
    long g = 0;
    while (!q.empty()) {
        auto u = q.front();
        q.pop();
        for (std::size_t v = 0; v < n; ++v) {
            if (!(K(u, v) > 0.0)) continue;
            if (level[v] < 0) {
                level[v] = level[u] + 1;
                q.push(v);
            } else {
                g = std::gcd(g, std::abs(level[u] + 1 - level[v]));
            }
        }
    }
    r.chain_period = g == 0 ? 1 : static_cast<std::size_t>(g);
    if (r.chain_period > 1) r.diagnosis = Ergodicity::periodic_chain;
    return r;
}

/// Closed communicating classes of a kernel; a unique stationary law exists
/// iff there is exactly one.
inline std::vector<std::vector<std::size_t>> recurrent_classes(const Matrix& K) {
    const auto n = static_cast<std::size_t>(K.rows());
    std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
    for (std::size_t u = 0; u < n; ++u) {
        std::vector<std::size_t> stack{u};
        reach[u][u] = true;
        while (!stack.empty()) {
            auto x = stack.back();
            stack.pop_back();
            for (std::size_t v = 0; v < n; ++v)
                if (K(x, v) > 0.0 && !reach[u][v]) {
                    reach[u][v] = true;
                    stack.push_back(v);
                }
        }
    }
    std::vector<std::vector<std::size_t>> classes;
    std::vector<bool> assigned(n, false);
    for (std::size_t u = 0; u < n; ++u) {
        if (assigned[u]) continue;
        bool closed = true;
        for (std::size_t v = 0; v < n && closed; ++v)
            if (reach[u][v] && !reach[v][u]) closed = false;
        if (!closed) continue;
        std::vector<std::size_t> cls;
        for (std::size_t v = 0; v < n; ++v)
            if (reach[u][v]) {
                cls.push_back(v);
                assigned[v] = true;
            }
        classes.push_back(std::move(cls));
    }
    return classes;
}

namespace detail {

inline void append_beliefs(BeliefTable& b, const PomdpModel& phase_model, const Vector& p) {
    const auto S = phase_model.num_states(), O = phase_model.num_observations();
    const Matrix& sigma = phase_model.observation();
    Vector obs = (p.transpose() * sigma).transpose();
    Matrix belief = Matrix::Zero(S, O);
    std::vector<bool> support(O, false);
    for (std::size_t o = 0; o < O; ++o) {
        if (obs[o] <= kSupportThreshold) continue;
        support[o] = true;
        belief.col(o) = p.cwiseProduct(sigma.col(o)) / obs[o];
    }
    b.obs_marginals.push_back(std::move(obs));
    b.beliefs.push_back(std::move(belief));
    b.supported.push_back(std::move(support));
}

}  // namespace detail

/// Posterior b_t(s|o) = p_t(s) sigma(o|s) / sigma_t(o) for every phase.
inline BeliefTable compute_beliefs(const PeriodicPomdpModel& model, const PhaseDistribution& dist) {
    BeliefTable b;
    for (std::size_t t = 0; t < dist.period(); ++t) detail::append_beliefs(b, model.phase(t), dist.marginals[t]);
    return b;
}

/// Single-phase belief table for marginal `p` in model phase `phase`.
inline BeliefTable beliefs_at(const PeriodicPomdpModel& model, const Vector& p, std::size_t phase) {
    BeliefTable b;
    detail::append_beliefs(b, model.phase(phase), p);
    return b;
}

/// Expected cost of one phase: sum_s p_t(s) sum_a P(a|s) c(s,a).
inline double phase_cost(const PeriodicPomdpModel& model, const ReactivePolicy& policy, std::size_t t,
                         const Vector& marginal) {
    const auto& m = model.phase(t);
    const Matrix w = state_action_probs(m, policy.kernel(t));
    return marginal.dot(w.cwiseProduct(m.cost()).rowwise().sum());
}

/// Long-term average expected cost per phase of the process.
inline double external_cost(const PeriodicPomdpModel& model, const ReactivePolicy& policy,
                            const PhaseDistribution& dist) {
    const auto T = policy.period();
    double total = 0.0;
    for (std::size_t t = 0; t < T; ++t) total += phase_cost(model, policy, t, dist.at(t));
    return total / static_cast<double>(T);
}

}  // namespace minfo
