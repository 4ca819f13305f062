#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "minfo/markov.hpp"
#include "minfo/policy.hpp"
#include "minfo/value_function.hpp"

namespace minfo {

inline constexpr double kLn2 = std::numbers::ln2;

inline double to_bits(double nats) { return nats / kLn2; }

/// Per-phase action marginals and their phase average.
struct MarginalSet {
    std::vector<Vector> per_phase;
    Vector phase_averaged;

    std::size_t period() const { return per_phase.size(); }
    const Vector& at(std::size_t t) const { return per_phase[t % per_phase.size()]; }
    const Vector& prior(std::size_t t, InfoVariant v) const {
        return v == InfoVariant::clock_aware ? phase_averaged : at(t);
    }
};

/// Information terms in nats.
struct InfoBreakdown {
    double obs_info = 0.0;    ///< (1/T) sum_t I[o_t; a_t]
    double clock_info = 0.0;  ///< I[t; a_t]
    double total = 0.0;       ///< obs_info + clock_info

    double obs_info_bits() const { return to_bits(obs_info); }
    double clock_info_bits() const { return to_bits(clock_info); }
    double total_bits() const { return to_bits(total); }

    double charged(InfoVariant v) const { return v == InfoVariant::clock_aware ? total : obs_info; }
};

/// Raised when a KL divergence has mass outside the support of its reference.
class UndefinedDivergence : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// D_KL[p || q] in nats with 0 log 0 = 0.
template <typename P, typename Q>
double kl_divergence(const P& p, const Q& q) {
    double d = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) continue;
        if (q[i] <= 0.0) throw UndefinedDivergence("KL divergence: p has mass where q has none");
        d += p[i] * std::log(p[i] / q[i]);
    }
    return d;
}

/// pi_t(a) = sum_o sigma_t(o) pi_t(a|o), and their phase average.
inline MarginalSet marginal_policy(const ReactivePolicy& policy, const BeliefTable& beliefs) {
    const auto T = policy.period();
    if (beliefs.period() != T) throw std::invalid_argument("marginal_policy: phase count mismatch");
    MarginalSet m;
    m.phase_averaged = Vector::Zero(static_cast<Eigen::Index>(policy.num_actions()));
    for (std::size_t t = 0; t < T; ++t) {
        Vector pt = (beliefs.obs_marginals[t].transpose() * policy.kernel(t)).transpose();
        m.phase_averaged += pt;
        m.per_phase.push_back(std::move(pt));
    }
    m.phase_averaged /= static_cast<double>(T);
    return m;
}

/// Observation- and clock-information of a periodic policy from the
/// closed-form KL sums. Masked observations carry no weight.
inline InfoBreakdown information_costs(const ReactivePolicy& policy, const BeliefTable& beliefs,
                                       const MarginalSet& marginals) {
    const auto T = policy.period();
    if (beliefs.period() != T || marginals.period() != T)
        throw std::invalid_argument("information_costs: phase count mismatch");
    InfoBreakdown info;
    for (std::size_t t = 0; t < T; ++t) {
        const auto& k = policy.kernel(t);
        for (Eigen::Index o = 0; o < k.rows(); ++o) {
            if (!beliefs.supported[t][o]) continue;
            info.obs_info += beliefs.obs_marginals[t][o] * kl_divergence(k.row(o), marginals.per_phase[t]);
        }
        if (T > 1) info.clock_info += kl_divergence(marginals.per_phase[t], marginals.phase_averaged);
    }
    info.obs_info = std::max(0.0, info.obs_info / static_cast<double>(T));
    info.clock_info = std::max(0.0, info.clock_info / static_cast<double>(T));
    info.total = info.obs_info + info.clock_info;
    return info;
}

/// F = I / beta + C, where I is the observation information (plain) or the
/// total including the clock term (clock-aware).
inline double free_energy(const InfoBreakdown& info, double external, double beta, InfoVariant variant) {
    if (!(beta > 0.0)) throw std::invalid_argument("free_energy: beta must be positive");
    return info.charged(variant) / beta + external;
}

/// Pointwise informational cost log(pi_t(a|o) / prior(a)) per (o, a);
/// -inf where the policy has no mass.
inline Matrix pointwise_information(const ReactivePolicy& policy, const MarginalSet& marginals, std::size_t t,
                                    InfoVariant variant) {
    const auto& k = policy.kernel(t);
    const Vector& prior = marginals.prior(t, variant);
    Matrix i(k.rows(), k.cols());
    for (Eigen::Index o = 0; o < k.rows(); ++o)
        for (Eigen::Index a = 0; a < k.cols(); ++a)
            i(o, a) = k(o, a) > 0.0 ? std::log(k(o, a) / prior[a]) : -std::numeric_limits<double>::infinity();
    return i;
}

/// d_t(o, a) for one phase; rows of masked observations are zero and flagged.
struct DistortionTable {
    Matrix values;
    std::vector<bool> supported;
    InfoVariant variant = InfoVariant::plain;
};

/// Expected immediate cost plus next-phase value under the belief:
/// d_t(o,a) = sum_s b_t(s|o) [c(s,a) + sum_s' p(s'|s,a) nu_{t+1}(s')].
inline DistortionTable distortion(const PeriodicPomdpModel& model, const BeliefTable& beliefs,
                                  const ValueFunction& values, std::size_t phase) {
    const auto& m = model.phase(phase);
    const auto S = m.num_states(), A = m.num_actions();
    const Vector& next = values.at(phase + 1);
    Matrix q(S, A);
    for (std::size_t a = 0; a < A; ++a) q.col(a) = m.cost().col(a) + m.transition(a) * next;

    const auto t = phase % beliefs.period();
    DistortionTable d;
    d.variant = values.variant;
    d.supported = beliefs.supported[t];
    d.values = beliefs.beliefs[t].transpose() * q;
    for (std::size_t o = 0; o < d.supported.size(); ++o)
        if (!d.supported[o]) d.values.row(o).setZero();
    return d;
}

}  // namespace minfo
