#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "minfo/model.hpp"

namespace minfo {

/// Periodic reactive policy: one |O| x |A| row-stochastic kernel pi_t(a|o)
/// per phase of the cycle. Period 1 is a stationary policy.
class ReactivePolicy {
public:
    explicit ReactivePolicy(std::vector<Matrix> kernels) : kernels_(std::move(kernels)) {
        using detail::concat;
        if (kernels_.empty()) throw ValidationError("policy period must be >= 1");
        const auto O = kernels_.front().rows(), A = kernels_.front().cols();
        for (std::size_t t = 0; t < kernels_.size(); ++t) {
            auto& k = kernels_[t];
            if (k.rows() != O || k.cols() != A)
                throw ValidationError(concat("policy phase ", t, " has inconsistent shape"));
            for (Eigen::Index o = 0; o < O; ++o) {
                double sum = 0.0;
                for (Eigen::Index a = 0; a < A; ++a) {
                    if (!std::isfinite(k(o, a)) || k(o, a) < 0.0)
                        throw ValidationError(concat("policy(t=", t, ", o=", o, "): invalid probability ", k(o, a)));
                    sum += k(o, a);
                }
                if (std::abs(sum - 1.0) > detail::kRowSumTolerance)
                    throw ValidationError(concat("policy(t=", t, ", o=", o, "): row sums to ", sum));
                k.row(o) /= sum;
            }
        }
    }

    std::size_t period() const { return kernels_.size(); }
    std::size_t num_observations() const { return static_cast<std::size_t>(kernels_.front().rows()); }
    std::size_t num_actions() const { return static_cast<std::size_t>(kernels_.front().cols()); }

    /// Kernel of phase t; t is taken modulo the period.
    const Matrix& kernel(std::size_t t) const { return kernels_[t % kernels_.size()]; }
    const std::vector<Matrix>& kernels() const { return kernels_; }

    /// Same policy unrolled to `period` phases (must be a multiple of the current one).
    ReactivePolicy repeated(std::size_t period) const {
        if (period == 0 || period % kernels_.size() != 0)
            throw ValidationError("repeated(): target period must be a multiple of the policy period");
        std::vector<Matrix> k;
        k.reserve(period);
        for (std::size_t t = 0; t < period; ++t) k.push_back(kernel(t));
        return ReactivePolicy(std::move(k));
    }

    /// Uniform over allowed actions in every phase.
    static ReactivePolicy uniform(const PeriodicPomdpModel& model, std::size_t period) {
        std::vector<Matrix> k;
        for (std::size_t t = 0; t < period; ++t) {
            const auto& mask = model.allowed(t);
            Matrix m = Matrix::Zero(model.num_observations(), model.num_actions());
            double n = 0.0;
            for (bool b : mask) n += b ? 1.0 : 0.0;
            for (std::size_t a = 0; a < mask.size(); ++a)
                if (mask[a]) m.col(a).setConstant(1.0 / n);
            k.push_back(std::move(m));
        }
        return ReactivePolicy(std::move(k));
    }

    /// Policy that takes `action` deterministically in every phase.
    static ReactivePolicy deterministic(std::size_t num_obs, std::size_t num_actions,
                                        const std::vector<std::size_t>& action_per_phase) {
        std::vector<Matrix> k;
        for (auto a : action_per_phase) {
            Matrix m = Matrix::Zero(num_obs, num_actions);
            m.col(a).setOnes();
            k.push_back(std::move(m));
        }
        return ReactivePolicy(std::move(k));
    }

private:
    std::vector<Matrix> kernels_;
};

/// Checks that the policy fits the model: matching sizes, period a multiple
/// of the model's phase count, and no mass on masked actions.
inline void check_policy(const PeriodicPomdpModel& model, const ReactivePolicy& policy) {
    using detail::concat;
    if (policy.num_observations() != model.num_observations() || policy.num_actions() != model.num_actions())
        throw ValidationError(concat("policy shape ", policy.num_observations(), "x", policy.num_actions(),
                                     " does not match model ", model.num_observations(), "x",
                                     model.num_actions()));
    if (policy.period() % model.num_phases() != 0)
        throw ValidationError(concat("policy period ", policy.period(), " is not a multiple of the model's ",
                                     model.num_phases(), " phases"));
    for (std::size_t t = 0; t < policy.period(); ++t) {
        const auto& mask = model.allowed(t);
        const auto& k = policy.kernel(t);
        for (std::size_t a = 0; a < mask.size(); ++a) {
            if (mask[a]) continue;
            if (k.col(a).cwiseAbs().maxCoeff() > 0.0)
                throw ValidationError(concat("policy phase ", t, " puts mass on disallowed action ",
                                             model.action_labels()[a]));
        }
    }
}

}  // namespace minfo
