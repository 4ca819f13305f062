#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <exception>
#include <future>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "minfo/solver.hpp"

namespace minfo {

/// One solved grid point of a beta sweep.
struct SweepPoint {
    double beta = 0.0;
    double free_energy = 0.0;
    double external_cost = 0.0;
    double obs_info_nats = 0.0;
    double clock_info_nats = 0.0;
    std::size_t period = 1;
    /// pi_t(a|o) per phase of the detected cycle
    std::vector<Matrix> policy;
    bool converged = false;
    std::string message;

    double total_info_nats() const { return obs_info_nats + clock_info_nats; }
};

/// Adjacent grid points whose detected periods differ.
struct BifurcationEvent {
    double beta_low = 0.0;
    double beta_high = 0.0;
    std::size_t period_before = 1;
    std::size_t period_after = 1;
};

enum class SweepMode { warm, cold };

/// `count` log-spaced values from lo to hi inclusive.
inline std::vector<double> log_grid(double lo, double hi, std::size_t count) {
    if (!(lo > 0.0) || !(hi >= lo) || count == 0) throw std::invalid_argument("log_grid: need 0 < lo <= hi, count >= 1");
    std::vector<double> g(count);
    if (count == 1) {
        g[0] = lo;
        return g;
    }
    const double a = std::log(lo), b = std::log(hi);
    for (std::size_t i = 0; i < count; ++i)
        g[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
    g.front() = lo;
    g.back() = hi;
    return g;
}

namespace detail {

inline SweepPoint to_point(double beta, const SolveResult& r) {
    SweepPoint p;
    p.beta = beta;
    p.free_energy = r.report.free_energy;
    p.external_cost = r.report.external_cost;
    p.obs_info_nats = r.report.info.obs_info;
    p.clock_info_nats = r.report.info.clock_info;
    p.period = r.report.detected_period;
    p.policy = r.policy.kernels();
    p.converged = r.report.converged;
    p.message = r.report.message;
    return p;
}

inline SweepPoint failed_point(double beta, const std::exception& e) {
    SweepPoint p;
    p.beta = beta;
    p.converged = false;
    p.message = e.what();
    return p;
}

}  // namespace detail

/// Solves at every beta of an increasing grid.
///
/// Warm mode starts each solve from the previous point's policy with a fresh
/// perturbation (seed `rng_seed + index`), following branches through
/// bifurcations. Cold mode solves every point independently from the uniform
/// policy and runs the points concurrently. A failing point is recorded as
/// not converged and the sweep carries on.
inline std::vector<SweepPoint> sweep(const PeriodicPomdpModel& model, const std::vector<double>& grid,
                                     const SolverOptions& options, SweepMode mode = SweepMode::warm) {
    if (grid.empty()) throw std::invalid_argument("sweep: empty beta grid");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!(grid[i] > 0.0) || !std::isfinite(grid[i])) throw std::invalid_argument("sweep: beta values must be positive");
        if (i > 0 && !(grid[i] > grid[i - 1])) throw std::invalid_argument("sweep: beta grid must be strictly increasing");
    }

    auto options_at = [&](std::size_t i) {
        SolverOptions o = options;
        o.beta = grid[i];
        o.rng_seed = options.rng_seed + i;
        return o;
    };

    std::vector<SweepPoint> points;
    points.reserve(grid.size());
    if (mode == SweepMode::warm) {
        std::optional<ReactivePolicy> previous;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            try {
                auto r = solve(model, options_at(i), previous);
                points.push_back(detail::to_point(grid[i], r));
                previous = std::move(r.policy);
            } catch (const std::exception& e) {
                points.push_back(detail::failed_point(grid[i], e));
            }
        }
        return points;
    }

    std::vector<std::future<SweepPoint>> jobs;
    jobs.reserve(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        jobs.push_back(std::async(std::launch::async, [&model, o = options_at(i)]() {
            try {
                return detail::to_point(o.beta, solve(model, o));
            } catch (const std::exception& e) {
                return detail::failed_point(o.beta, e);
            }
        }));
    }
    for (auto& j : jobs) points.push_back(j.get());
    return points;
}

/// One event per adjacent pair of points with different detected periods.
inline std::vector<BifurcationEvent> detect_bifurcations(const std::vector<SweepPoint>& points) {
    std::vector<BifurcationEvent> events;
    for (std::size_t i = 1; i < points.size(); ++i) {
        if (!(points[i].beta > points[i - 1].beta))
            throw std::invalid_argument("detect_bifurcations: points must be sorted by beta");
        if (points[i].period != points[i - 1].period)
            events.push_back({points[i - 1].beta, points[i].beta, points[i - 1].period, points[i].period});
    }
    return events;
}

struct RefinedBifurcation {
    BifurcationEvent event;
    bool bracket_lost = false;
    std::size_t solves = 0;
    std::string message;
};

/// Bisects an event's bracket until it is at most `target_width` wide.
///
/// The low endpoint is solved first; every midpoint is warm-started from the
/// current low-side policy. A midpoint reproducing `period_before` moves the
/// low end, any other period moves the high end. If the low endpoint itself
/// no longer shows `period_before`, the bracket is lost and the original
/// event is returned.
inline RefinedBifurcation refine_bifurcation(const PeriodicPomdpModel& model, const BifurcationEvent& event,
                                             const SolverOptions& options, double target_width) {
    if (!(event.beta_low < event.beta_high)) throw std::invalid_argument("refine_bifurcation: empty bracket");
    if (!(target_width > 0.0)) throw std::invalid_argument("refine_bifurcation: target width must be positive");
    RefinedBifurcation out{event, false, 0, {}};
    if (event.beta_high - event.beta_low <= target_width) return out;

    SolverOptions o = options;
    o.beta = event.beta_low;
    auto low = solve(model, o);
    ++out.solves;
    if (low.report.detected_period != event.period_before) {
        out.bracket_lost = true;
        out.message = detail::concat("low endpoint beta=", event.beta_low, " now has period ",
                                     low.report.detected_period, " instead of ", event.period_before);
        return out;
    }

    double lo = event.beta_low, hi = event.beta_high;
    std::size_t after = event.period_after;
    ReactivePolicy low_policy = std::move(low.policy);
    while (hi - lo > target_width) {
        const double mid = 0.5 * (lo + hi);
        o.beta = mid;
        o.rng_seed = options.rng_seed + out.solves;
        auto r = solve(model, o, low_policy);
        ++out.solves;
        if (r.report.detected_period == event.period_before) {
            lo = mid;
            low_policy = std::move(r.policy);
        } else {
            hi = mid;
            after = r.report.detected_period;
        }
    }
    out.event = {lo, hi, event.period_before, after};
    return out;
}

namespace detail {

inline std::string fmt17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

/// Sweep table: summary columns, then pi[t][o][a] for every phase up to the
/// longest detected period (shorter cycles repeat).
inline void write_sweep_csv(std::ostream& out, const PeriodicPomdpModel& model, const std::vector<SweepPoint>& points) {
    std::size_t phases = 1;
    for (const auto& p : points) phases = std::max(phases, p.policy.size());
    const auto& obs = model.obs_labels();
    const auto& act = model.action_labels();

    out << "beta,free_energy,external_cost,obs_info_nats,clock_info_nats,obs_info_bits,clock_info_bits,period,converged";
    for (std::size_t t = 0; t < phases; ++t)
        for (const auto& o : obs)
            for (const auto& a : act) out << ",pi[" << t << "][" << o << "][" << a << "]";
    out << '\n';

    using detail::fmt17;
    for (const auto& p : points) {
        out << fmt17(p.beta) << ',' << fmt17(p.free_energy) << ',' << fmt17(p.external_cost) << ','
            << fmt17(p.obs_info_nats) << ',' << fmt17(p.clock_info_nats) << ',' << fmt17(to_bits(p.obs_info_nats))
            << ',' << fmt17(to_bits(p.clock_info_nats)) << ',' << p.period << ',' << (p.converged ? 1 : 0);
        for (std::size_t t = 0; t < phases; ++t)
            for (std::size_t o = 0; o < obs.size(); ++o)
                for (std::size_t a = 0; a < act.size(); ++a) {
                    out << ',';
                    if (!p.policy.empty()) out << fmt17(p.policy[t % p.policy.size()](o, a));
                }
        out << '\n';
    }
}

inline void write_bifurcations_csv(std::ostream& out, const std::vector<BifurcationEvent>& events) {
    out << "beta_low,beta_high,period_before,period_after\n";
    for (const auto& e : events)
        out << detail::fmt17(e.beta_low) << ',' << detail::fmt17(e.beta_high) << ',' << e.period_before << ','
            << e.period_after << '\n';
}

}  // namespace minfo
