// minfo: solve, sweep, reduce and simulate minimum-information policies.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "minfo/io.hpp"
#include "minfo/minfo.hpp"

namespace fs = std::filesystem;
using namespace minfo;

namespace {

enum Exit { ok = 0, usage = 1, validation = 2, no_convergence = 3 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SolverFlags {
    SolverOptions opt;
    bool clock_cost = true;
    std::size_t max_iterations = 10000;

    SolverOptions options() const {
        SolverOptions o = opt;
        o.clock_aware = clock_cost;
        o.max_outer_iterations = max_iterations;
        return o;
    }
};

void add_solver_flags(CLI::App* cmd, SolverFlags& f, bool with_beta) {
    if (with_beta) cmd->add_option("--beta", f.opt.beta, "inverse temperature")->capture_default_str();
    cmd->add_flag("--clock-cost,!--no-clock-cost", f.clock_cost, "charge clock information I[t;a]")
        ->capture_default_str();
    cmd->add_option("--max-period", f.opt.max_period, "longest detectable period")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--seed", f.opt.rng_seed, "perturbation seed")->capture_default_str();
    cmd->add_option("--perturbation", f.opt.perturbation_scale, "initial noise magnitude")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    cmd->add_option("--tol-fe", f.opt.fe_tolerance, "free-energy tolerance")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--tol-cycle", f.opt.cycle_tolerance, "limit-cycle tolerance")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--initial-period", f.opt.initial_period, "period of the perturbed start (0: double the seed)")
        ->capture_default_str();
    cmd->add_option("--max-iterations", f.max_iterations, "outer iteration cap")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
}

fs::path prepare_out(const std::string& dir) {
    fs::path p(dir);
    fs::create_directories(p);
    return p;
}

void print_summary(const SolverReport& r) {
    std::printf("period=%zu converged=%s F=%.12g C=%.12g obs_info=%.12g clock_info=%.12g iterations=%zu\n",
                r.detected_period, r.converged ? "yes" : "no", r.free_energy, r.external_cost, r.info.obs_info,
                r.info.clock_info, r.outer_iterations);
    if (!r.message.empty()) std::fprintf(stderr, "note: %s\n", r.message.c_str());
    if (r.ergodicity != Ergodicity::ergodic) std::fprintf(stderr, "warning: induced chain is %s\n", to_string(r.ergodicity));
    if (r.monotonicity_violations > 0)
        std::fprintf(stderr, "warning: free energy rose in %zu outer iterations\n", r.monotonicity_violations);
}

int cmd_solve(const std::string& model_spec, const SolverFlags& f, const std::string& warm, const std::string& out) {
    const auto model = io::load_model(model_spec);
    std::optional<ReactivePolicy> initial;
    if (!warm.empty()) initial = io::policy_from_json(io::read_json_file(warm));
    const auto options = f.options();
    const auto r = solve(model, options, initial);
    const auto dir = prepare_out(out);
    io::write_json_file((dir / "report.json").string(), io::report_to_json(r.report, options));
    io::write_json_file((dir / "policy.json").string(), io::policy_to_json(model, r.policy));
    print_summary(r.report);
    return r.report.converged ? ok : no_convergence;
}

struct SweepFlags {
    double beta_min = 0.1, beta_max = 10.0;
    std::size_t steps = 64;
    bool cold = false;
    double refine = 0.0;
};

int cmd_sweep(const std::string& model_spec, const SolverFlags& f, const SweepFlags& s, const std::string& out) {
    if (!(s.beta_min > 0.0) || s.beta_max < s.beta_min) throw UsageError("need 0 < --beta-min <= --beta-max");
    if (s.steps > 1 && s.beta_max == s.beta_min) throw UsageError("--beta-max must exceed --beta-min for several steps");
    const auto model = io::load_model(model_spec);
    const auto options = f.options();
    const auto grid = log_grid(s.beta_min, s.beta_max, s.steps);
    const auto points = sweep(model, grid, options, s.cold ? SweepMode::cold : SweepMode::warm);
    auto events = detect_bifurcations(points);
    if (s.refine > 0.0)
        for (auto& e : events) {
            const auto r = refine_bifurcation(model, e, options, s.refine);
            if (r.bracket_lost) std::fprintf(stderr, "warning: %s\n", r.message.c_str());
            e = r.event;
        }

    const auto dir = prepare_out(out);
    std::ofstream sweep_csv(dir / "sweep.csv"), events_csv(dir / "bifurcations.csv");
    write_sweep_csv(sweep_csv, model, points);
    write_bifurcations_csv(events_csv, events);

    std::size_t failed = 0;
    for (const auto& p : points) failed += p.converged ? 0 : 1;
    std::printf("%zu points, %zu not converged, %zu period changes\n", points.size(), failed, events.size());
    for (const auto& e : events)
        std::printf("  period %zu -> %zu between beta %.6g and %.6g\n", e.period_before, e.period_after, e.beta_low, e.beta_high);
    return ok;
}

int cmd_reduce(const std::string& setup_path, std::optional<double> penalty, const std::string& out) {
    const auto setup = io::setup_from_json(io::read_json_file(setup_path));
    ReductionOptions ro;
    if (penalty) {
        ro.penalty_mode = true;
        ro.penalty = *penalty;
    }
    const auto reduced = build_reduced_pomdp(setup, ro);
    const auto policy = embed_retentive_policy(setup, reduced);
    const auto eq = check_equivalence(setup, ro);

    const auto dir = prepare_out(out);
    io::write_json_file((dir / "reduced_model.json").string(), io::model_to_json(reduced.model));
    io::write_json_file((dir / "embedded_policy.json").string(), io::policy_to_json(reduced.model, policy));
    io::write_json_file((dir / "equivalence.json").string(), io::equivalence_to_json(eq));
    std::printf("reduced model: %zu states, %zu observations, %zu actions\n", reduced.model.num_states(),
                reduced.model.num_observations(), reduced.model.num_actions());
    if (eq.deviation)
        std::printf("equivalence: deviation %.3g, cost per step %.12g vs %.12g\n", *eq.deviation, eq.retentive_cost,
                    eq.reduced_cost);
    else
        std::printf("equivalence: no verdict (%s)\n", eq.diagnosis.c_str());
    return ok;
}

struct SimulateFlags {
    std::size_t steps = 1000000;
    std::size_t burn_in = 1000;
    std::uint64_t seed = 0;
    std::string policy;
};

int cmd_simulate(const std::string& model_spec, const SolverFlags& f, const SimulateFlags& s, const std::string& out) {
    const auto model = io::load_model(model_spec);
    const auto options = f.options();
    std::optional<ReactivePolicy> policy;
    SolverState analytic;
    if (!s.policy.empty()) {
        policy = io::policy_from_json(io::read_json_file(s.policy));
        analytic = evaluate_policy(model, *policy, options.beta, options.variant()).state;
    } else {
        auto r = solve(model, options);
        if (!r.report.converged) std::fprintf(stderr, "warning: solve did not converge: %s\n", r.report.message.c_str());
        policy = std::move(r.policy);
        analytic = std::move(r.state);
    }
    const auto stats = rollout(model, *policy, s.steps, s.burn_in, s.seed);
    const auto check = crosscheck(model, *policy, stats, analytic);

    nlohmann::json j;
    j["rollout"] = io::rollout_to_json(stats);
    j["crosscheck"] = io::crosscheck_to_json(check);
    const auto dir = prepare_out(out);
    io::write_json_file((dir / "rollout.json").string(), j);
    std::printf("empirical cost %.8g +- %.2g, analytic %.8g, z=%.3g, occupancy deviation %.3g%s\n", stats.cost_mean,
                stats.standard_error, check.analytic_cost, check.cost_z, check.occupancy_deviation,
                check.flagged() ? " (flagged)" : "");
    return ok;
}

int cmd_example(const std::string& name, const std::string& out) {
    auto m = builtins::by_name(name);
    if (!m) {
        std::string known;
        for (const auto& n : builtins::names()) known += (known.empty() ? "" : ", ") + n;
        throw ValidationError("unknown example '" + name + "'; available: " + known);
    }
    const auto doc = io::model_to_json(*m).dump(2);
    if (out.empty() || out == "-") {
        std::cout << doc << '\n';
    } else {
        std::ofstream f(out);
        if (!f) throw std::runtime_error("cannot write '" + out + "'");
        f << doc << '\n';
    }
    return ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Minimum-information reactive policies for finite POMDPs"};
    app.require_subcommand(1);

    std::string model_spec, out = ".";
    SolverFlags solver_flags;

    auto* solve_cmd = app.add_subcommand("solve", "solve at one beta; writes report.json and policy.json");
    std::string warm;
    solve_cmd->add_option("--model", model_spec, "model file or builtin:<name>")->required();
    add_solver_flags(solve_cmd, solver_flags, true);
    solve_cmd->add_option("--policy", warm, "warm-start policy file");
    solve_cmd->add_option("--out", out, "output directory")->capture_default_str();

    auto* sweep_cmd = app.add_subcommand("sweep", "solve over a log-spaced beta grid; writes sweep.csv and bifurcations.csv");
    SweepFlags sweep_flags;
    sweep_cmd->add_option("--model", model_spec, "model file or builtin:<name>")->required();
    add_solver_flags(sweep_cmd, solver_flags, false);
    sweep_cmd->add_option("--beta-min", sweep_flags.beta_min)->check(CLI::PositiveNumber)->capture_default_str();
    sweep_cmd->add_option("--beta-max", sweep_flags.beta_max)->check(CLI::PositiveNumber)->capture_default_str();
    sweep_cmd->add_option("--beta-steps", sweep_flags.steps)->check(CLI::PositiveNumber)->capture_default_str();
    sweep_cmd->add_flag("--cold,!--warm", sweep_flags.cold, "independent solves instead of continuation");
    sweep_cmd->add_option("--refine", sweep_flags.refine, "bisect each period change to this bracket width")
        ->check(CLI::NonNegativeNumber);
    sweep_cmd->add_option("--out", out, "output directory")->capture_default_str();

    auto* reduce_cmd = app.add_subcommand("reduce", "flatten a retentive setup into a two-phase model");
    std::string setup_path;
    std::optional<double> penalty;
    reduce_cmd->add_option("--setup", setup_path, "retentive setup file")->required();
    reduce_cmd->add_option("--penalty", penalty, "charge wrong-phase actions instead of masking them");
    reduce_cmd->add_option("--out", out, "output directory")->capture_default_str();

    auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo rollout checked against the analytic solution");
    SimulateFlags sim_flags;
    sim_cmd->add_option("--model", model_spec, "model file or builtin:<name>")->required();
    add_solver_flags(sim_cmd, solver_flags, true);
    sim_cmd->add_option("--policy", sim_flags.policy, "policy file (default: solve at --beta)");
    sim_cmd->add_option("--steps", sim_flags.steps)->check(CLI::PositiveNumber)->capture_default_str();
    sim_cmd->add_option("--burn-in", sim_flags.burn_in)->capture_default_str();
    sim_cmd->add_option("--rollout-seed", sim_flags.seed, "sampling seed")->capture_default_str();
    sim_cmd->add_option("--out", out, "output directory")->capture_default_str();

    auto* example_cmd = app.add_subcommand("example", "print a built-in model document");
    std::string example_name;
    example_cmd->add_option("name", example_name, "two-state | robot")->required();
    example_cmd->add_option("--out", out, "output file (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : usage;
    }

    try {
        if (*solve_cmd || *sim_cmd) {
            if (!(solver_flags.opt.beta > 0.0)) throw UsageError("--beta must be positive");
        }
        if (*solve_cmd) return cmd_solve(model_spec, solver_flags, warm, out);
        if (*sweep_cmd) return cmd_sweep(model_spec, solver_flags, sweep_flags, out);
        if (*reduce_cmd) return cmd_reduce(setup_path, penalty, out);
        if (*sim_cmd) return cmd_simulate(model_spec, solver_flags, sim_flags, out);
        if (*example_cmd) return cmd_example(example_name, example_cmd->count("--out") ? out : "");
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return usage;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return usage;
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "invalid input: %s\n", e.what());
        return validation;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return validation;
    }
    return usage;
}
