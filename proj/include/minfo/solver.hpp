#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "minfo/information.hpp"
#include "minfo/markov.hpp"
#include "minfo/model.hpp"
#include "minfo/policy.hpp"
#include "minfo/value_function.hpp"

namespace minfo {

struct SolverOptions {
    double beta = 1.0;
    /// unset: clock-aware whenever max_period > 1
    std::optional<bool> clock_aware;
    std::size_t max_period = 16;
    double cycle_tolerance = 1e-8;
    double fe_tolerance = 1e-9;
    /// sup-norm policy change between outer iterations required for convergence
    double policy_tolerance = 1e-10;
    std::size_t max_outer_iterations = 10000;
    std::size_t min_outer_iterations = 1;
    std::size_t max_forward_steps = 20000;
    /// forward steps taken before a cycle may be declared; guards against
    /// spurious closure when the forward map contracts slowly
    std::size_t min_forward_steps = 64;
    double perturbation_scale = 1e-3;
    std::uint64_t rng_seed = 0;
    /// period of the perturbed initial policy; 0 doubles the seed policy's
    /// period (capped at max_period) so that perturbations excite
    /// period-doubling modes
    std::size_t initial_period = 0;

    InfoVariant variant() const {
        const bool aware = clock_aware.value_or(max_period > 1);
        return aware ? InfoVariant::clock_aware : InfoVariant::plain;
    }

    void validate() const {
        if (!(beta > 0.0) || !std::isfinite(beta)) throw std::invalid_argument("beta must be positive and finite");
        if (max_period < 1) throw std::invalid_argument("max_period must be >= 1");
        if (!(cycle_tolerance > 0.0) || !(fe_tolerance > 0.0) || !(policy_tolerance > 0.0))
            throw std::invalid_argument("tolerances must be positive");
        if (!(perturbation_scale >= 0.0)) throw std::invalid_argument("perturbation_scale must be >= 0");
        if (max_outer_iterations < 1 || max_forward_steps < 1)
            throw std::invalid_argument("iteration caps must be >= 1");
    }
};

/// Everything the fixed-point equations couple: marginals, beliefs, action
/// marginals and the value function.
struct SolverState {
    PhaseDistribution dist;
    BeliefTable beliefs;
    MarginalSet marginals;
    ValueFunction values;
};

/// Sup-norm violation of each of the four coupled equations.
struct Residuals {
    double forward = 0.0;   ///< p_{t+1} = p_t P_t
    double marginal = 0.0;  ///< action marginals
    double backward = 0.0;  ///< value recursion
    double policy = 0.0;    ///< exponential-family policy condition

    double max() const { return std::max({forward, marginal, backward, policy}); }
};

struct SolverReport {
    double free_energy = 0.0;
    double external_cost = 0.0;
    /// external cost per step of the underlying process (differs for multi-phase reductions)
    double external_cost_per_step = 0.0;
    InfoBreakdown info;
    std::size_t detected_period = 1;
    std::size_t outer_iterations = 0;
    Residuals residuals;
    bool converged = false;
    /// forward loop failed to close a cycle within max_period
    bool period_overflow = false;
    double cycle_mismatch = 0.0;
    Ergodicity ergodicity = Ergodicity::ergodic;
    std::vector<double> fe_history;
    std::size_t monotonicity_violations = 0;
    std::string message;
};

struct SolveResult {
    ReactivePolicy policy;
    SolverState state;
    SolverReport report;
};

namespace detail {

// info/beta with the convention that zero information costs nothing at beta = 0
inline double priced(double info, double beta) { return info == 0.0 ? 0.0 : info / beta; }

// g_t(s) = sum_{o,a} sigma(o|s) pi_t(a|o) f_t(s,o,a), the expected
// instantaneous free-energy cost of each state
inline Vector instantaneous_cost(const PeriodicPomdpModel& model, const ReactivePolicy& policy,
                                 const BeliefTable& beliefs, const MarginalSet& marginals, std::size_t t,
                                 double beta, InfoVariant variant) {
    const auto& m = model.phase(t);
    const auto& k = policy.kernel(t);
    const Matrix w = state_action_probs(m, k);
    Vector g = w.cwiseProduct(m.cost()).rowwise().sum();

    const Matrix info = pointwise_information(policy, marginals, t, variant);
    const auto& support = beliefs.supported[t % beliefs.period()];
    Vector per_obs = Vector::Zero(k.rows());
    for (Eigen::Index o = 0; o < k.rows(); ++o) {
        if (!support[o]) continue;
        double e = 0.0;
        for (Eigen::Index a = 0; a < k.cols(); ++a)
            if (k(o, a) > 0.0) e += k(o, a) * info(o, a);
        per_obs[o] = priced(e, beta);
    }
    g += m.observation() * per_obs;
    return g;
}

}  // namespace detail

/// Solves the periodic backward recursion
///   nu_t(s) = g_t(s) + sum_s' P_t(s'|s) nu_{t+1}(s') - phi_t
/// under the gauge sum_s p_t(s) nu_t(s) = 0, which fixes phi_t = p_t . g_t.
/// Direct least-squares solve up to 512 unknowns, damped iteration beyond.
inline ValueFunction evaluate_values(const PeriodicPomdpModel& model, const ReactivePolicy& policy,
                                     const PhaseDistribution& dist, const MarginalSet& marginals, double beta,
                                     InfoVariant variant) {
    if (beta < 0.0) throw std::invalid_argument("evaluate_values: beta must be >= 0");
    const auto T = policy.period();
    const auto S = model.num_states();
    const BeliefTable beliefs = compute_beliefs(model, dist);

    std::vector<Vector> g(T);
    std::vector<Matrix> P(T);
    ValueFunction v;
    v.variant = variant;
    v.phi.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
        g[t] = detail::instantaneous_cost(model, policy, beliefs, marginals, t, beta, variant);
        P[t] = policy_state_kernel(model, policy, t);
        v.phi[t] = dist.at(t).dot(g[t]);
    }

    const auto n = S * T;
    if (n <= 512) {
        Matrix A = Matrix::Zero(static_cast<Eigen::Index>(n + T), static_cast<Eigen::Index>(n));
        Vector rhs = Vector::Zero(static_cast<Eigen::Index>(n + T));
        for (std::size_t t = 0; t < T; ++t) {
            const auto row0 = static_cast<Eigen::Index>(t * S);
            const auto next0 = static_cast<Eigen::Index>(((t + 1) % T) * S);
            const auto s_ = static_cast<Eigen::Index>(S);
            A.block(row0, row0, s_, s_) += Matrix::Identity(s_, s_);
            A.block(row0, next0, s_, s_) -= P[t];
            rhs.segment(row0, s_) = g[t] - Vector::Constant(s_, v.phi[t]);
            A.block(static_cast<Eigen::Index>(n + t), row0, 1, s_) = dist.at(t).transpose();
        }
        const Vector x = A.colPivHouseholderQr().solve(rhs);
        for (std::size_t t = 0; t < T; ++t) v.nu.push_back(x.segment(static_cast<Eigen::Index>(t * S), S));
        return v;
    }

    v.nu.assign(T, Vector::Zero(S));
    constexpr double damping = 0.5;
    for (int it = 0; it < 1000000; ++it) {
        double change = 0.0;
        for (std::size_t tt = T; tt-- > 0;) {
            Vector target = g[tt] + P[tt] * v.nu[(tt + 1) % T] - Vector::Constant(S, v.phi[tt]);
            target.array() -= dist.at(tt).dot(target);
            Vector next = (1.0 - damping) * v.nu[tt] + damping * target;
            change = std::max(change, (next - v.nu[tt]).cwiseAbs().maxCoeff());
            v.nu[tt] = std::move(next);
        }
        if (change < 1e-13) return v;
    }
    throw NonConvergence("evaluate_values: backward iteration did not converge");
}

/// Raised when no action keeps positive weight in a policy update.
class DegenerateUpdate : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// pi(a|o) = prior(a) exp(-beta d(o,a)) / Z(o), restricted to `mask`.
/// Rows of masked observations copy `fallback` when given, else the prior.
inline Matrix policy_update(const DistortionTable& distortion, const Vector& prior, double beta,
                            const ActionMask* mask = nullptr, const Matrix* fallback = nullptr) {
    const auto O = distortion.values.rows(), A = distortion.values.cols();
    if (prior.size() != A) throw std::invalid_argument("policy_update: prior size mismatch");
    auto allowed = [&](Eigen::Index a) { return (mask == nullptr || (*mask)[a]) && prior[a] > 0.0; };

    Matrix k = Matrix::Zero(O, A);
    for (Eigen::Index o = 0; o < O; ++o) {
        if (!distortion.supported[o]) {
            if (fallback != nullptr) {
                k.row(o) = fallback->row(o);
                continue;
            }
            double z = 0.0;
            for (Eigen::Index a = 0; a < A; ++a)
                if (allowed(a)) z += prior[a];
            if (!(z > 0.0)) throw DegenerateUpdate("policy_update: prior has no allowed support");
            for (Eigen::Index a = 0; a < A; ++a)
                if (allowed(a)) k(o, a) = prior[a] / z;
            continue;
        }
        double lowest = std::numeric_limits<double>::infinity();
        for (Eigen::Index a = 0; a < A; ++a)
            if (allowed(a)) lowest = std::min(lowest, distortion.values(o, a));
        if (!std::isfinite(lowest))
            throw DegenerateUpdate(detail::concat("policy_update: observation ", o, " has no admissible action"));
        double z = 0.0;
        for (Eigen::Index a = 0; a < A; ++a) {
            if (!allowed(a)) continue;
            k(o, a) = prior[a] * std::exp(-beta * (distortion.values(o, a) - lowest));
            z += k(o, a);
        }
        if (!(z > 0.0)) throw DegenerateUpdate("policy_update: partition function vanished");
        k.row(o) /= z;
    }
    return k;
}

/// Full evaluation of a fixed policy: the solver state plus the objective terms.
struct PolicyEvaluation {
    SolverState state;
    InfoBreakdown info;
    double external_cost = 0.0;
    double free_energy = 0.0;
};

inline PolicyEvaluation evaluate_policy(const PeriodicPomdpModel& model, const ReactivePolicy& policy, double beta,
                                        InfoVariant variant) {
    PolicyEvaluation e;
    e.state.dist = stationary_phase_distributions(model, policy);
    e.state.beliefs = compute_beliefs(model, e.state.dist);
    e.state.marginals = marginal_policy(policy, e.state.beliefs);
    e.state.values = evaluate_values(model, policy, e.state.dist, e.state.marginals, beta, variant);
    e.info = information_costs(policy, e.state.beliefs, e.state.marginals);
    e.external_cost = external_cost(model, policy, e.state.dist);
    e.free_energy = beta > 0.0 ? free_energy(e.info, e.external_cost, beta, variant) : e.external_cost;
    return e;
}

/// Per-equation sup-norm residuals of (policy, state) plugged into the
/// right-hand sides of the fixed-point equations.
inline Residuals residuals(const PeriodicPomdpModel& model, const ReactivePolicy& policy, const SolverState& state,
                           double beta, InfoVariant variant) {
    const auto T = policy.period();
    if (state.dist.period() != T || state.marginals.period() != T || state.values.period() != T)
        throw std::invalid_argument("residuals: state and policy periods differ");
    Residuals r;

    for (std::size_t t = 0; t < T; ++t) {
        const Vector next = forward_step(model, policy, t, state.dist.at(t));
        r.forward = std::max(r.forward, (next - state.dist.at(t + 1)).cwiseAbs().maxCoeff());
    }

    const BeliefTable beliefs = compute_beliefs(model, state.dist);
    const MarginalSet fresh = marginal_policy(policy, beliefs);
    for (std::size_t t = 0; t < T; ++t)
        r.marginal = std::max(r.marginal, (fresh.per_phase[t] - state.marginals.per_phase[t]).cwiseAbs().maxCoeff());
    r.marginal =
        std::max(r.marginal, (fresh.phase_averaged - state.marginals.phase_averaged).cwiseAbs().maxCoeff());

    for (std::size_t t = 0; t < T; ++t) {
        const Vector g = detail::instantaneous_cost(model, policy, beliefs, state.marginals, t, beta, variant);
        const Matrix P = policy_state_kernel(model, policy, t);
        const Vector rhs = g + P * state.values.at(t + 1) - Vector::Constant(g.size(), state.values.phi[t]);
        r.backward = std::max(r.backward, (state.values.at(t) - rhs).cwiseAbs().maxCoeff());

        const DistortionTable d = distortion(model, beliefs, state.values, t);
        const Matrix k = policy_update(d, state.marginals.prior(t, variant), beta, &model.allowed(t),
                                       &policy.kernel(t));
        for (Eigen::Index o = 0; o < k.rows(); ++o) {
            if (!d.supported[o]) continue;
            r.policy = std::max(r.policy, (k.row(o) - policy.kernel(t).row(o)).cwiseAbs().maxCoeff());
        }
    }
    return r;
}

/// Adds seeded uniform noise in [0, scale) to every allowed entry and renormalizes.
inline ReactivePolicy perturb(const PeriodicPomdpModel& model, const ReactivePolicy& policy, double scale,
                              std::mt19937_64& rng) {
    if (scale <= 0.0) return policy;
    std::uniform_real_distribution<double> noise(0.0, scale);
    std::vector<Matrix> k = policy.kernels();
    for (std::size_t t = 0; t < k.size(); ++t) {
        const auto& mask = model.allowed(t);
        for (Eigen::Index o = 0; o < k[t].rows(); ++o) {
            for (Eigen::Index a = 0; a < k[t].cols(); ++a)
                if (mask[a]) k[t](o, a) += noise(rng);
            k[t].row(o) /= k[t].row(o).sum();
        }
    }
    return ReactivePolicy(std::move(k));
}

namespace detail {

struct ForwardCycle {
    std::vector<Matrix> kernels;
    std::size_t offset = 0;  // forward step at which the new phase 0 starts
    bool closed = false;
    double mismatch = 0.0;
    std::size_t steps = 0;
};

struct Snapshot {
    Vector marginal;
    Matrix kernel;
};

inline double distance(const Snapshot& a, const Snapshot& b) {
    return std::max((a.marginal - b.marginal).cwiseAbs().maxCoeff(), (a.kernel - b.kernel).cwiseAbs().maxCoeff());
}

// Forward pass: alternate the forward recursion and the policy condition
// with nu and the priors held fixed, until the (marginal, policy) trajectory
// repeats with some period T' <= max_period for T' consecutive steps.
inline ForwardCycle forward_until_cycle(const PeriodicPomdpModel& model, const ReactivePolicy& policy,
                                        const SolverState& state, double beta, InfoVariant variant,
                                        const SolverOptions& opt) {
    const auto M = model.num_phases();
    const auto T_old = policy.period();
    const auto W = opt.max_period;
    std::vector<std::size_t> candidates;
    for (std::size_t c = M; c <= W; c += M) candidates.push_back(c);

    std::deque<Snapshot> window;  // last 2W snapshots; back() is the current step
    std::vector<std::size_t> run(W + 1, 0);
    std::vector<double> worst(W + 1, 0.0);
    Vector p = state.dist.at(0);

    auto assemble = [&](std::size_t k, std::size_t period, ForwardCycle& out) {
        // window index of step j is j - (k + 1 - window.size())
        const std::size_t base = k + 1 - window.size();
        const std::size_t g = std::gcd(period, T_old);
        std::size_t j = k + 1 - period;
        while (j % g != 0) ++j;
        out.offset = j;
        for (std::size_t i = 0; i < period; ++i) {
            std::size_t step = j + i;
            if (step > k) step -= period;
            out.kernels.push_back(window[step - base].kernel);
        }
    };

    ForwardCycle out;
    for (std::size_t k = 0; k < opt.max_forward_steps; ++k) {
        const BeliefTable b = beliefs_at(model, p, k);
        const DistortionTable d = distortion(model, b, state.values, k);
        Matrix kernel = policy_update(d, state.marginals.prior(k, variant), beta, &model.allowed(k),
                                      &policy.kernel(k));
        window.push_back({p, kernel});
        if (window.size() > 2 * W) window.pop_front();

        for (auto c : candidates) {
            if (window.size() <= c) continue;
            const double dist = distance(window.back(), window[window.size() - 1 - c]);
            run[c] = dist < opt.cycle_tolerance ? run[c] + 1 : 0;
        }
        for (auto c : candidates) {
            if (run[c] >= c && k + 1 >= opt.min_forward_steps) {
                out.closed = true;
                out.steps = k + 1;
                assemble(k, c, out);
                return out;
            }
        }

        p = clean_distribution(forward_step(model, window.back().kernel, k, p));
    }

    // no closure: report the candidate with the smallest recent mismatch
    std::size_t best = candidates.front();
    double best_mismatch = std::numeric_limits<double>::infinity();
    for (auto c : candidates) {
        if (window.size() < 2 * c) continue;
        double m = 0.0;
        for (std::size_t i = 0; i < c; ++i)
            m = std::max(m, distance(window[window.size() - 1 - i], window[window.size() - 1 - i - c]));
        if (m < best_mismatch) {
            best_mismatch = m;
            best = c;
        }
    }
    out.steps = opt.max_forward_steps;
    out.mismatch = best_mismatch;
    assemble(opt.max_forward_steps - 1, best, out);
    return out;
}

inline double policy_change(const ReactivePolicy& old_policy, const ReactivePolicy& new_policy,
                            std::size_t offset) {
    const auto L = std::lcm(old_policy.period(), new_policy.period());
    double change = 0.0;
    for (std::size_t t = 0; t < L; ++t)
        change = std::max(change, (new_policy.kernel(t) - old_policy.kernel(offset + t)).cwiseAbs().maxCoeff());
    return change;
}

}  // namespace detail

/// Alternating fixed-point schedule for the free-energy optimal reactive policy.
///
/// Each outer iteration recomputes the action marginals and the value
/// function for the current policy, then runs the forward recursion and the
/// policy condition step by step until the trajectory closes a limit cycle,
/// whose period becomes the policy period. Stops when the free energy and
/// the policy settle. `initial` seeds the schedule (warm start); otherwise
/// it starts from the uniform policy. Either way the start is unrolled to
/// `initial_period` phases and perturbed with seeded noise.
inline SolveResult solve(const PeriodicPomdpModel& model, const SolverOptions& options,
                         const std::optional<ReactivePolicy>& initial = std::nullopt) {
    options.validate();
    const auto M = model.num_phases();
    if (options.max_period < M) throw std::invalid_argument("max_period is smaller than the model's phase count");
    const auto variant = options.variant();
    const double beta = options.beta;

    ReactivePolicy policy = initial ? *initial : ReactivePolicy::uniform(model, M);
    check_policy(model, policy);
    {
        const auto seed = policy.period();
        std::size_t target = options.initial_period == 0 ? 2 * seed : options.initial_period;
        target = std::max(std::min(target, options.max_period), seed);
        target -= target % seed;
        policy = policy.repeated(target);
    }
    std::mt19937_64 rng(options.rng_seed);
    policy = perturb(model, policy, options.perturbation_scale, rng);

    PolicyEvaluation eval = evaluate_policy(model, policy, beta, variant);
    SolverReport report;
    report.fe_history.push_back(eval.free_energy);
    bool settled = false;
    double previous_change = std::numeric_limits<double>::infinity();

    for (std::size_t it = 1; it <= options.max_outer_iterations; ++it) {
        auto cycle = detail::forward_until_cycle(model, policy, eval.state, beta, variant, options);
        ReactivePolicy next(std::move(cycle.kernels));
        PolicyEvaluation next_eval = evaluate_policy(model, next, beta, variant);

        const double change = detail::policy_change(policy, next, cycle.offset);
        const double delta_fe = next_eval.free_energy - eval.free_energy;
        const bool same_period = next.period() == policy.period();
        if (delta_fe > 1e-7) ++report.monotonicity_violations;

        report.outer_iterations = it;
        report.period_overflow = !cycle.closed;
        report.cycle_mismatch = cycle.mismatch;
        report.fe_history.push_back(next_eval.free_energy);
        policy = std::move(next);
        eval = std::move(next_eval);

        // geometric tail estimate of the remaining distance to the fixed point;
        // near a bifurcation the contraction ratio approaches 1
        const double ratio = same_period ? change / previous_change : 1.0;
        const double remaining = ratio < 1.0 ? change * ratio / (1.0 - ratio) : change;
        previous_change = same_period ? change : std::numeric_limits<double>::infinity();

        if (it >= options.min_outer_iterations && cycle.closed && same_period &&
            std::abs(delta_fe) < options.fe_tolerance && change < options.policy_tolerance &&
            remaining < options.policy_tolerance) {
            settled = true;
            break;
        }
    }

    report.free_energy = eval.free_energy;
    report.external_cost = eval.external_cost;
    report.external_cost_per_step = eval.external_cost * model.phases_per_step();
    report.info = eval.info;
    report.detected_period = policy.period();
    report.residuals = residuals(model, policy, eval.state, beta, variant);
    report.ergodicity = ergodicity_check(model, policy).diagnosis;
    report.converged = settled && report.residuals.max() < 1e-6;
    if (report.period_overflow)
        report.message = detail::concat("forward pass did not close a cycle of period <= ", options.max_period,
                                        "; best candidate mismatch ", report.cycle_mismatch);
    else if (!settled)
        report.message = detail::concat("no convergence within ", options.max_outer_iterations, " outer iterations");
    else if (!report.converged)
        report.message = "schedule settled but residuals exceed 1e-6";
    return {std::move(policy), std::move(eval.state), std::move(report)};
}

}  // namespace minfo
