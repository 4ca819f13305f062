#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace minfo {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Raised when a model, policy or setup violates its structural invariants.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

template <typename... Args>
std::string concat(Args&&... args) {
    std::ostringstream os;
    (os << ... << std::forward<Args>(args));
    return os.str();
}

// tolerance accepted on input row sums; rows are renormalized afterwards
inline constexpr double kRowSumTolerance = 1e-9;

inline void check_distribution(const double* row, std::size_t n, const std::string& what) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(row[i]))
            throw ValidationError(concat(what, ": non-finite probability"));
        if (row[i] < 0.0)
            throw ValidationError(concat(what, ": negative probability ", row[i]));
        sum += row[i];
    }
    if (std::abs(sum - 1.0) > kRowSumTolerance)
        throw ValidationError(concat(what, ": row sums to ", sum, " instead of 1"));
}

}  // namespace detail

/// Unchecked model tables as they come out of a parser.
/// Layout is row-major: transition[s][a][s'], observation[s][o], cost[s][a].
struct RawModel {
    std::vector<std::string> states;
    std::vector<std::string> observations;
    std::vector<std::string> actions;
    std::vector<std::vector<std::vector<double>>> transition;
    std::vector<std::vector<double>> observation;
    std::vector<std::vector<double>> cost;
};

/// A finite stationary POMDP: transition p(s'|s,a), observation sigma(o|s)
/// and cost c(s,a). Always valid once constructed.
class PomdpModel {
public:
    explicit PomdpModel(const RawModel& raw) { assign(raw); }

    std::size_t num_states() const { return state_labels_.size(); }
    std::size_t num_observations() const { return obs_labels_.size(); }
    std::size_t num_actions() const { return action_labels_.size(); }

    const std::vector<std::string>& state_labels() const { return state_labels_; }
    const std::vector<std::string>& obs_labels() const { return obs_labels_; }
    const std::vector<std::string>& action_labels() const { return action_labels_; }

    /// |S| x |S| matrix of p(s'|s,a) for a fixed action.
    const Matrix& transition(std::size_t a) const { return transition_[a]; }
    double transition(std::size_t s, std::size_t a, std::size_t next) const {
        return transition_[a](s, next);
    }
    /// |S| x |O| matrix of sigma(o|s).
    const Matrix& observation() const { return observation_; }
    /// |S| x |A| matrix of c(s,a).
    const Matrix& cost() const { return cost_; }

    RawModel raw() const {
        RawModel r;
        r.states = state_labels_;
        r.observations = obs_labels_;
        r.actions = action_labels_;
        const auto S = num_states(), O = num_observations(), A = num_actions();
        r.transition.assign(S, std::vector<std::vector<double>>(A, std::vector<double>(S)));
        r.observation.assign(S, std::vector<double>(O));
        r.cost.assign(S, std::vector<double>(A));
        for (std::size_t s = 0; s < S; ++s) {
            for (std::size_t a = 0; a < A; ++a) {
                for (std::size_t n = 0; n < S; ++n) r.transition[s][a][n] = transition_[a](s, n);
                r.cost[s][a] = cost_(s, a);
            }
            for (std::size_t o = 0; o < O; ++o) r.observation[s][o] = observation_(s, o);
        }
        return r;
    }

private:
    void assign(const RawModel& raw) {
        using detail::concat;
        const auto S = raw.states.size(), O = raw.observations.size(), A = raw.actions.size();
        if (S == 0 || O == 0 || A == 0)
            throw ValidationError("model needs at least one state, observation and action");
        if (raw.transition.size() != S)
            throw ValidationError(concat("transition: expected ", S, " state rows, got ", raw.transition.size()));
        if (raw.observation.size() != S)
            throw ValidationError(concat("observation: expected ", S, " state rows, got ", raw.observation.size()));
        if (raw.cost.size() != S)
            throw ValidationError(concat("cost: expected ", S, " state rows, got ", raw.cost.size()));

        transition_.assign(A, Matrix::Zero(S, S));
        observation_ = Matrix::Zero(S, O);
        cost_ = Matrix::Zero(S, A);
        for (std::size_t s = 0; s < S; ++s) {
            if (raw.transition[s].size() != A)
                throw ValidationError(concat("transition[", raw.states[s], "]: expected ", A, " actions"));
            for (std::size_t a = 0; a < A; ++a) {
                const auto& row = raw.transition[s][a];
                const auto where = concat("transition(s=", raw.states[s], ", a=", raw.actions[a], ")");
                if (row.size() != S)
                    throw ValidationError(concat(where, ": expected ", S, " next states, got ", row.size()));
                detail::check_distribution(row.data(), S, where);
                double sum = 0.0;
                for (double v : row) sum += v;
                for (std::size_t n = 0; n < S; ++n) transition_[a](s, n) = row[n] / sum;
            }
            const auto& orow = raw.observation[s];
            const auto owhere = concat("observation(s=", raw.states[s], ")");
            if (orow.size() != O)
                throw ValidationError(concat(owhere, ": expected ", O, " observations, got ", orow.size()));
            detail::check_distribution(orow.data(), O, owhere);
            double osum = 0.0;
            for (double v : orow) osum += v;
            for (std::size_t o = 0; o < O; ++o) observation_(s, o) = orow[o] / osum;

            if (raw.cost[s].size() != A)
                throw ValidationError(concat("cost[", raw.states[s], "]: expected ", A, " actions"));
            for (std::size_t a = 0; a < A; ++a) {
                if (!std::isfinite(raw.cost[s][a]))
                    throw ValidationError(concat("cost(s=", raw.states[s], ", a=", raw.actions[a], ") is not finite"));
                cost_(s, a) = raw.cost[s][a];
            }
        }
        state_labels_ = raw.states;
        obs_labels_ = raw.observations;
        action_labels_ = raw.actions;
    }

    std::vector<std::string> state_labels_, obs_labels_, action_labels_;
    std::vector<Matrix> transition_;
    Matrix observation_;
    Matrix cost_;
};

inline PomdpModel validate_model(const RawModel& raw) { return PomdpModel(raw); }

using ActionMask = std::vector<bool>;

/// A time-variant POMDP cycling through M phase models with per-phase
/// action masks. A stationary model is the M = 1 case.
///
/// `phases_per_step` records how many phases make up one step of an
/// underlying process (2 for half-step reductions); it only affects
/// per-step reporting.
class PeriodicPomdpModel {
public:
    PeriodicPomdpModel(const PomdpModel& stationary)  // NOLINT: implicit by intent
        : phases_{stationary}, allowed_{ActionMask(stationary.num_actions(), true)} {}

    PeriodicPomdpModel(std::vector<PomdpModel> phases, std::vector<ActionMask> allowed,
                       int phases_per_step = 1)
        : phases_(std::move(phases)), allowed_(std::move(allowed)), phases_per_step_(phases_per_step) {
        using detail::concat;
        if (phases_.empty()) throw ValidationError("periodic model needs at least one phase");
        if (allowed_.size() != phases_.size())
            throw ValidationError(concat("allowed_actions: expected ", phases_.size(), " phases, got ",
                                         allowed_.size()));
        if (phases_per_step_ < 1) throw ValidationError("phases_per_step must be >= 1");
        const auto& first = phases_.front();
        for (std::size_t m = 0; m < phases_.size(); ++m) {
            const auto& ph = phases_[m];
            if (ph.state_labels() != first.state_labels() || ph.obs_labels() != first.obs_labels() ||
                ph.action_labels() != first.action_labels())
                throw ValidationError(concat("phase ", m, " does not share the label sets of phase 0"));
            if (allowed_[m].size() != first.num_actions())
                throw ValidationError(concat("allowed_actions[", m, "] has wrong length"));
            bool any = false;
            for (bool b : allowed_[m]) any = any || b;
            if (!any) throw ValidationError(concat("phase ", m, " allows no action"));
        }
    }

    std::size_t num_phases() const { return phases_.size(); }
    const PomdpModel& phase(std::size_t t) const { return phases_[t % phases_.size()]; }
    const ActionMask& allowed(std::size_t t) const { return allowed_[t % allowed_.size()]; }
    int phases_per_step() const { return phases_per_step_; }
    bool is_stationary() const { return phases_.size() == 1; }

    std::size_t num_states() const { return phases_.front().num_states(); }
    std::size_t num_observations() const { return phases_.front().num_observations(); }
    std::size_t num_actions() const { return phases_.front().num_actions(); }
    const std::vector<std::string>& state_labels() const { return phases_.front().state_labels(); }
    const std::vector<std::string>& obs_labels() const { return phases_.front().obs_labels(); }
    const std::vector<std::string>& action_labels() const { return phases_.front().action_labels(); }

private:
    std::vector<PomdpModel> phases_;
    std::vector<ActionMask> allowed_;
    int phases_per_step_ = 1;
};

}  // namespace minfo
