#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "minfo/markov.hpp"
#include "minfo/model.hpp"
#include "minfo/policy.hpp"

namespace minfo {

/// An agent with finite memory: inference q(m_t | m_{t-1}, o_t) updates the
/// memory from each observation, control pi(a_t | m_t) acts on the memory.
struct RetentiveSetup {
    PomdpModel base;
    std::vector<std::string> memory;
    /// inference[m] is |O| x |M|: row o holds q(. | m, o)
    std::vector<Matrix> inference;
    /// |M| x |A|: row m holds pi(. | m)
    Matrix control;
    Vector initial_memory;

    std::size_t num_memory() const { return memory.size(); }
};

inline void validate_setup(const RetentiveSetup& s) {
    using detail::concat;
    const auto M = s.memory.size(), O = s.base.num_observations(), A = s.base.num_actions();
    if (M == 0) throw ValidationError("setup needs at least one memory state");
    if (s.inference.size() != M) throw ValidationError(concat("inference: expected ", M, " memory blocks"));
    for (std::size_t m = 0; m < M; ++m) {
        const auto& q = s.inference[m];
        if (static_cast<std::size_t>(q.rows()) != O || static_cast<std::size_t>(q.cols()) != M)
            throw ValidationError(concat("inference[", s.memory[m], "]: expected ", O, "x", M));
        for (std::size_t o = 0; o < O; ++o) {
            std::vector<double> row(M);
            for (std::size_t n = 0; n < M; ++n) row[n] = q(o, n);
            detail::check_distribution(row.data(), M,
                                       concat("inference(m=", s.memory[m], ", o=", s.base.obs_labels()[o], ")"));
        }
    }
    if (static_cast<std::size_t>(s.control.rows()) != M || static_cast<std::size_t>(s.control.cols()) != A)
        throw ValidationError(concat("control: expected ", M, "x", A));
    for (std::size_t m = 0; m < M; ++m) {
        std::vector<double> row(A);
        for (std::size_t a = 0; a < A; ++a) row[a] = s.control(m, a);
        detail::check_distribution(row.data(), A, concat("control(m=", s.memory[m], ")"));
    }
    if (static_cast<std::size_t>(s.initial_memory.size()) != M)
        throw ValidationError(concat("initial_memory: expected ", M, " entries"));
    std::vector<double> init(s.initial_memory.data(), s.initial_memory.data() + M);
    detail::check_distribution(init.data(), M, "initial_memory");
}

struct ReductionOptions {
    /// Admissibility by per-phase action masks (default) or by charging
    /// `penalty` for wrong-phase actions, which then leave the state unchanged.
    bool penalty_mode = false;
    double penalty = 1.0;
};

/// Index maps between composite and base labels of the reduced model.
struct ReducedIndex {
    std::size_t memory_size = 0, base_states = 0, base_observations = 0, base_actions = 0;

    std::size_t state_index(std::size_t m, std::size_t s) const { return m * base_states + s; }
    /// o == base_observations stands for the blank observation
    std::size_t obs_index(std::size_t m, std::size_t o) const { return m * (base_observations + 1) + o; }
    std::size_t blank_index(std::size_t m) const { return obs_index(m, base_observations); }
    std::size_t commit_action(std::size_t m) const { return m; }
    std::size_t base_action(std::size_t a) const { return memory_size + a; }

    std::size_t memory_of_state(std::size_t i) const { return i / base_states; }
    std::size_t base_state_of(std::size_t i) const { return i % base_states; }
    std::size_t memory_of_obs(std::size_t i) const { return i / (base_observations + 1); }
    /// base observation of a composite index; base_observations for blank
    std::size_t base_obs_of(std::size_t i) const { return i % (base_observations + 1); }
    bool is_commit(std::size_t a) const { return a < memory_size; }
};

/// Two-phase model on memory x state. Phase 0 shows (m_prev, o) and takes a
/// memory commit; phase 1 shows (m, blank) and takes a base action. Two
/// phases make one step of the base process.
struct ReducedModel : ReducedIndex {
    PeriodicPomdpModel model;
};

inline constexpr const char* kBlankObservation = "⊥";

inline ReducedModel build_reduced_pomdp(const RetentiveSetup& setup, const ReductionOptions& options = {}) {
    using detail::concat;
    validate_setup(setup);
    const auto& b = setup.base;
    const auto M = setup.memory.size(), S = b.num_states(), O = b.num_observations(), A = b.num_actions();

    std::set<std::string> acts(b.action_labels().begin(), b.action_labels().end());
    for (const auto& m : setup.memory)
        if (acts.count(m))
            throw ValidationError(concat("memory label '", m, "' collides with an action label"));
    for (const auto& o : b.obs_labels())
        if (o == kBlankObservation) throw ValidationError("observation label collides with the blank observation");

    const ReducedIndex r{M, S, O, A};
    const auto S2 = M * S, O2 = M * (O + 1), A2 = M + A;

    RawModel raw;
    for (std::size_t m = 0; m < M; ++m)
        for (std::size_t s = 0; s < S; ++s) raw.states.push_back(concat("(", setup.memory[m], ",", b.state_labels()[s], ")"));
    for (std::size_t m = 0; m < M; ++m) {
        for (std::size_t o = 0; o < O; ++o)
            raw.observations.push_back(concat("(", setup.memory[m], ",", b.obs_labels()[o], ")"));
        raw.observations.push_back(concat("(", setup.memory[m], ",", kBlankObservation, ")"));
    }
    raw.actions = setup.memory;
    raw.actions.insert(raw.actions.end(), b.action_labels().begin(), b.action_labels().end());

    const double wrong_cost = options.penalty_mode ? options.penalty : 0.0;
    auto blank = [&]() {
        RawModel p = raw;
        p.transition.assign(S2, std::vector<std::vector<double>>(A2, std::vector<double>(S2, 0.0)));
        p.observation.assign(S2, std::vector<double>(O2, 0.0));
        p.cost.assign(S2, std::vector<double>(A2, 0.0));
        return p;
    };

    RawModel commit = blank();
    RawModel act = blank();
    for (std::size_t m = 0; m < M; ++m)
        for (std::size_t s = 0; s < S; ++s) {
            const auto i = r.state_index(m, s);
            for (std::size_t o = 0; o < O; ++o) commit.observation[i][r.obs_index(m, o)] = b.observation()(s, o);
            act.observation[i][r.blank_index(m)] = 1.0;

            for (std::size_t n = 0; n < M; ++n) {
                commit.transition[i][r.commit_action(n)][r.state_index(n, s)] = 1.0;
                act.transition[i][r.commit_action(n)][i] = 1.0;
                act.cost[i][r.commit_action(n)] = wrong_cost;
            }
            for (std::size_t a = 0; a < A; ++a) {
                commit.transition[i][r.base_action(a)][i] = 1.0;
                commit.cost[i][r.base_action(a)] = wrong_cost;
                for (std::size_t n = 0; n < S; ++n) act.transition[i][r.base_action(a)][r.state_index(m, n)] = b.transition(s, a, n);
                act.cost[i][r.base_action(a)] = b.cost()(s, a);
            }
        }

    ActionMask commit_mask(A2, true), act_mask(A2, true);
    if (!options.penalty_mode) {
        for (std::size_t a = 0; a < A2; ++a) {
            commit_mask[a] = a < M;
            act_mask[a] = a >= M;
        }
    }
    return {r, PeriodicPomdpModel({PomdpModel(commit), PomdpModel(act)}, {commit_mask, act_mask}, 2)};
}

/// The retentive agent as a period-2 reactive policy on the reduced model.
/// Rows for observations that cannot occur in a phase are filled with
/// admissible placeholders.
inline ReactivePolicy embed_retentive_policy(const RetentiveSetup& setup, const ReducedModel& r) {
    const auto M = r.memory_size, O = r.base_observations, A = r.base_actions;
    const auto O2 = M * (O + 1), A2 = M + A;
    Matrix commit = Matrix::Zero(O2, A2), act = Matrix::Zero(O2, A2);
    for (std::size_t m = 0; m < M; ++m) {
        for (std::size_t o = 0; o <= O; ++o) {
            const auto i = r.obs_index(m, o);
            for (std::size_t n = 0; n < M; ++n)
                commit(i, r.commit_action(n)) = o < O ? setup.inference[m](o, n) : 1.0 / static_cast<double>(M);
            for (std::size_t a = 0; a < A; ++a) act(i, r.base_action(a)) = setup.control(m, a);
        }
    }
    return ReactivePolicy({commit, act});
}

/// Exact comparison of the stationary joint law of (s_t, o_t, m_t, a_t).
struct EquivalenceReport {
    bool ergodic = true;
    std::string diagnosis;
    /// sup-norm deviation; absent when the instance has no unique stationary law
    std::optional<double> deviation;
    double retentive_cost = 0.0;  ///< average cost per step of the retentive process
    double reduced_cost = 0.0;    ///< same, read off the reduced process
    /// joint[((s*O + o)*M + m)*A + a]
    std::vector<double> retentive_joint, reduced_joint;
};

/// Builds both stationary joints by linear algebra, without sampling.
///
/// Retentive side: the chain on (m_{t-1}, s_t) with kernel
/// sum_o sigma(o|s) q(m|m',o) sum_a pi(a|m) p(s'|s,a). Reduced side: the
/// period-2 stationary marginal of the embedded policy at phase 0, pushed
/// through phase 0 and phase 1 using only the reduced model's tables.
inline EquivalenceReport check_equivalence(const RetentiveSetup& setup, const ReductionOptions& options = {}) {
    const ReducedModel r = build_reduced_pomdp(setup, options);
    const auto& b = setup.base;
    const auto M = r.memory_size, S = r.base_states, O = r.base_observations, A = r.base_actions;
    auto jidx = [&](std::size_t s, std::size_t o, std::size_t m, std::size_t a) { return ((s * O + o) * M + m) * A + a; };

    EquivalenceReport rep;
    const auto n = M * S;
    Matrix K = Matrix::Zero(n, n);
    for (std::size_t mp = 0; mp < M; ++mp)
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t o = 0; o < O; ++o)
                for (std::size_t m = 0; m < M; ++m)
                    for (std::size_t a = 0; a < A; ++a) {
                        const double w = b.observation()(s, o) * setup.inference[mp](o, m) * setup.control(m, a);
                        if (w == 0.0) continue;
                        for (std::size_t sn = 0; sn < S; ++sn) K(mp * S + s, m * S + sn) += w * b.transition(s, a, sn);
                    }
    const auto classes = recurrent_classes(K);
    if (classes.size() != 1) {
        rep.ergodic = false;
        rep.diagnosis = detail::concat("retentive chain has ", classes.size(), " closed classes; no unique stationary law");
        return rep;
    }
    const ReactivePolicy embedded = embed_retentive_policy(setup, r);
    const Matrix K2 = cycle_kernel(r.model, embedded, 0);
    if (recurrent_classes(K2).size() != 1) {
        rep.ergodic = false;
        rep.diagnosis = "reduced chain has no unique stationary law";
        return rep;
    }
    rep.diagnosis = "ergodic";

    const Vector x = stationary_distribution(K);
    rep.retentive_joint.assign(S * O * M * A, 0.0);
    for (std::size_t mp = 0; mp < M; ++mp)
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t o = 0; o < O; ++o)
                for (std::size_t m = 0; m < M; ++m)
                    for (std::size_t a = 0; a < A; ++a) {
                        const double w = x[mp * S + s] * b.observation()(s, o) * setup.inference[mp](o, m) * setup.control(m, a);
                        rep.retentive_joint[jidx(s, o, m, a)] += w;
                        rep.retentive_cost += w * b.cost()(s, a);
                    }

    const Vector p0 = stationary_distribution(K2);
    const auto& ph0 = r.model.phase(0);
    const auto& ph1 = r.model.phase(1);
    const auto S2 = ph0.num_states(), O2 = ph0.num_observations(), A2 = ph0.num_actions();
    rep.reduced_joint.assign(S * O * M * A, 0.0);
    double cost0 = 0.0, cost1 = 0.0;
    for (std::size_t i = 0; i < S2; ++i)
        for (std::size_t u = 0; u < O2; ++u) {
            const double w0 = p0[i] * ph0.observation()(i, u);
            if (w0 == 0.0) continue;
            for (std::size_t c = 0; c < A2; ++c) {
                const double w1 = w0 * embedded.kernel(0)(u, c);
                if (w1 == 0.0 || !r.is_commit(c)) continue;
                cost0 += w1 * ph0.cost()(i, c);
                for (std::size_t j = 0; j < S2; ++j) {
                    const double w2 = w1 * ph0.transition(i, c, j);
                    if (w2 == 0.0) continue;
                    for (std::size_t v = 0; v < O2; ++v) {
                        const double w3 = w2 * ph1.observation()(j, v);
                        if (w3 == 0.0) continue;
                        for (std::size_t d = 0; d < A2; ++d) {
                            const double w4 = w3 * embedded.kernel(1)(v, d);
                            if (w4 == 0.0 || r.is_commit(d)) continue;
                            cost1 += w4 * ph1.cost()(j, d);
                            rep.reduced_joint[jidx(r.base_state_of(i), r.base_obs_of(u), c, d - M)] += w4;
                        }
                    }
                }
            }
        }
    rep.reduced_cost = cost0 + cost1;

    double dev = 0.0;
    for (std::size_t k = 0; k < rep.retentive_joint.size(); ++k)
        dev = std::max(dev, std::abs(rep.retentive_joint[k] - rep.reduced_joint[k]));
    rep.deviation = dev;
    return rep;
}

}  // namespace minfo
