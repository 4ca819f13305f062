// Solve the two-state switcher on both sides of its period doubling, then
// sweep beta and print the detected period changes.

#include <cstdio>

#include "minfo/minfo.hpp"

int main() {
    using namespace minfo;
    const PeriodicPomdpModel model = builtins::two_state();

    for (double beta : {0.5, 4.0}) {
        SolverOptions options;
        options.beta = beta;
        const auto r = solve(model, options);
        std::printf("beta=%-4g period=%zu F=%.6f C=%.6f clock=%.4f bits\n", beta, r.report.detected_period,
                    r.report.free_energy, r.report.external_cost, to_bits(r.report.info.clock_info));
        for (std::size_t t = 0; t < r.policy.period(); ++t)
            std::printf("  phase %zu: P(right) = %.4f\n", t, r.policy.kernel(t)(0, 1));
    }

    const auto points = sweep(model, log_grid(0.25, 8.0, 40), SolverOptions{});
    for (const auto& e : detect_bifurcations(points)) {
        const auto refined = refine_bifurcation(model, e, SolverOptions{}, 0.01);
        std::printf("period %zu -> %zu for beta in [%.4f, %.4f]\n", e.period_before, e.period_after,
                    refined.event.beta_low, refined.event.beta_high);
    }
}
