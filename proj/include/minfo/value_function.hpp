#pragma once

#include <cstddef>
#include <vector>

#include "minfo/model.hpp"

namespace minfo {

/// Which informational cost the objective charges.
/// `plain` prices I[o;a] against the per-phase marginal; `clock_aware` also
/// prices I[t;a] by using the phase-averaged marginal as prior.
enum class InfoVariant { plain, clock_aware };

/// Periodic value function: nu_t(s) is the fluctuation of state s in phase
/// t around the average free energy, phi_t the per-phase offset. Gauge:
/// sum_s p_t(s) nu_t(s) = 0 in every phase.
struct ValueFunction {
    std::vector<Vector> nu;
    std::vector<double> phi;
    InfoVariant variant = InfoVariant::plain;

    std::size_t period() const { return nu.size(); }
    const Vector& at(std::size_t t) const { return nu[t % nu.size()]; }

    static ValueFunction zero(std::size_t num_states, std::size_t period, InfoVariant variant) {
        return {std::vector<Vector>(period, Vector::Zero(num_states)), std::vector<double>(period, 0.0), variant};
    }
};

}  // namespace minfo
