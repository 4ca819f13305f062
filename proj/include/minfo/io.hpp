#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "minfo/builtins.hpp"
#include "minfo/model.hpp"
#include "minfo/policy.hpp"
#include "minfo/reduction.hpp"
#include "minfo/simulator.hpp"
#include "minfo/solver.hpp"

namespace minfo::io {

using nlohmann::json;

namespace detail {

using minfo::detail::concat;

template <typename T>
T field(const json& j, const char* name, const std::string& where) {
    if (!j.is_object() || !j.contains(name)) throw ValidationError(concat(where, ": missing field '", name, "'"));
    try {
        return j.at(name).get<T>();
    } catch (const json::exception& e) {
        throw ValidationError(concat(where, ".", name, ": ", e.what()));
    }
}

inline Matrix to_matrix(const std::vector<std::vector<double>>& rows, const std::string& where) {
    const auto r = rows.size(), c = rows.empty() ? 0 : rows.front().size();
    Matrix m(r, c);
    for (std::size_t i = 0; i < r; ++i) {
        if (rows[i].size() != c) throw ValidationError(concat(where, ": ragged rows"));
        for (std::size_t k = 0; k < c; ++k) m(i, k) = rows[i][k];
    }
    return m;
}

inline std::vector<std::vector<double>> from_matrix(const Matrix& m) {
    std::vector<std::vector<double>> rows(m.rows(), std::vector<double>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index k = 0; k < m.cols(); ++k) rows[i][k] = m(i, k);
    return rows;
}

// JSON has no infinity or NaN; those become null
inline json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline RawModel raw_tables(const json& j, RawModel labels, const std::string& where) {
    labels.transition = field<std::vector<std::vector<std::vector<double>>>>(j, "transition", where);
    labels.observation = field<std::vector<std::vector<double>>>(j, "observation", where);
    labels.cost = field<std::vector<std::vector<double>>>(j, "cost", where);
    return labels;
}

inline void put_tables(json& j, const RawModel& r) {
    j["transition"] = r.transition;
    j["observation"] = r.observation;
    j["cost"] = r.cost;
}

}  // namespace detail

/// A model document: `states`, `observations`, `actions`, `transition`
/// [s][a][s'], `observation` [s][o], `cost` [s][a]. Periodic documents
/// replace the three tables by `phases` (array of table blocks) plus
/// `allowed_actions` (labels per phase) and optionally `phases_per_step`.
inline PeriodicPomdpModel model_from_json(const json& j) {
    using detail::field;
    RawModel labels;
    labels.states = field<std::vector<std::string>>(j, "states", "model");
    labels.observations = field<std::vector<std::string>>(j, "observations", "model");
    labels.actions = field<std::vector<std::string>>(j, "actions", "model");
    if (!j.contains("phases")) return PeriodicPomdpModel(PomdpModel(detail::raw_tables(j, labels, "model")));

    const auto& phases = j.at("phases");
    if (!phases.is_array() || phases.empty()) throw ValidationError("model.phases: expected a non-empty array");
    std::vector<PomdpModel> models;
    for (std::size_t m = 0; m < phases.size(); ++m)
        models.emplace_back(detail::raw_tables(phases[m], labels, detail::concat("model.phases[", m, "]")));

    std::vector<ActionMask> masks;
    if (j.contains("allowed_actions")) {
        const auto allowed = field<std::vector<std::vector<std::string>>>(j, "allowed_actions", "model");
        for (std::size_t m = 0; m < allowed.size(); ++m) {
            ActionMask mask(labels.actions.size(), false);
            for (const auto& name : allowed[m]) {
                auto it = std::find(labels.actions.begin(), labels.actions.end(), name);
                if (it == labels.actions.end())
                    throw ValidationError(detail::concat("allowed_actions[", m, "]: unknown action '", name, "'"));
                mask[static_cast<std::size_t>(it - labels.actions.begin())] = true;
            }
            masks.push_back(std::move(mask));
        }
    } else {
        masks.assign(models.size(), ActionMask(labels.actions.size(), true));
    }
    const int per_step = j.contains("phases_per_step") ? field<int>(j, "phases_per_step", "model") : 1;
    return PeriodicPomdpModel(std::move(models), std::move(masks), per_step);
}

inline json model_to_json(const PeriodicPomdpModel& model) {
    json j;
    j["states"] = model.state_labels();
    j["observations"] = model.obs_labels();
    j["actions"] = model.action_labels();
    if (model.is_stationary()) {
        detail::put_tables(j, model.phase(0).raw());
        return j;
    }
    j["phases"] = json::array();
    j["allowed_actions"] = json::array();
    for (std::size_t m = 0; m < model.num_phases(); ++m) {
        json block;
        detail::put_tables(block, model.phase(m).raw());
        j["phases"].push_back(std::move(block));
        std::vector<std::string> allowed;
        for (std::size_t a = 0; a < model.num_actions(); ++a)
            if (model.allowed(m)[a]) allowed.push_back(model.action_labels()[a]);
        j["allowed_actions"].push_back(allowed);
    }
    j["phases_per_step"] = model.phases_per_step();
    return j;
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError(detail::concat("cannot open '", path, "'"));
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError(detail::concat(path, ": ", e.what()));
    }
}

inline void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error(detail::concat("cannot write '", path, "'"));
    out << j.dump(2) << '\n';
}

/// `builtin:<name>` or a path to a model document.
inline PeriodicPomdpModel load_model(const std::string& spec) {
    const std::string prefix = "builtin:";
    if (spec.rfind(prefix, 0) == 0) {
        const auto name = spec.substr(prefix.size());
        if (auto m = builtins::by_name(name)) return *m;
        std::string known;
        for (const auto& n : builtins::names()) known += (known.empty() ? "" : ", ") + n;
        throw ValidationError(detail::concat("unknown builtin model '", name, "' (available: ", known, ")"));
    }
    return model_from_json(read_json_file(spec));
}

inline json policy_to_json(const PeriodicPomdpModel& model, const ReactivePolicy& policy) {
    json j;
    j["period"] = policy.period();
    j["observations"] = model.obs_labels();
    j["actions"] = model.action_labels();
    j["kernels"] = json::array();
    for (const auto& k : policy.kernels()) j["kernels"].push_back(detail::from_matrix(k));
    return j;
}

inline ReactivePolicy policy_from_json(const json& j) {
    const auto kernels = detail::field<std::vector<std::vector<std::vector<double>>>>(j, "kernels", "policy");
    std::vector<Matrix> k;
    for (std::size_t t = 0; t < kernels.size(); ++t)
        k.push_back(detail::to_matrix(kernels[t], detail::concat("policy.kernels[", t, "]")));
    return ReactivePolicy(std::move(k));
}

inline json info_to_json(const InfoBreakdown& info) {
    return {{"obs_info_nats", info.obs_info},      {"clock_info_nats", info.clock_info},
            {"total_nats", info.total},            {"obs_info_bits", info.obs_info_bits()},
            {"clock_info_bits", info.clock_info_bits()}, {"total_bits", info.total_bits()}};
}

inline json report_to_json(const SolverReport& r, const SolverOptions& o) {
    json j;
    j["beta"] = o.beta;
    j["clock_aware"] = o.variant() == InfoVariant::clock_aware;
    j["seed"] = o.rng_seed;
    j["free_energy"] = r.free_energy;
    j["external_cost"] = r.external_cost;
    j["external_cost_per_step"] = r.external_cost_per_step;
    j["info"] = info_to_json(r.info);
    j["detected_period"] = r.detected_period;
    j["outer_iterations"] = r.outer_iterations;
    j["residuals"] = {{"forward", r.residuals.forward},
                      {"marginal", r.residuals.marginal},
                      {"backward", r.residuals.backward},
                      {"policy", r.residuals.policy}};
    j["converged"] = r.converged;
    j["period_overflow"] = r.period_overflow;
    j["cycle_mismatch"] = detail::number(r.cycle_mismatch);
    j["ergodicity"] = to_string(r.ergodicity);
    j["monotonicity_violations"] = r.monotonicity_violations;
    j["message"] = r.message;
    return j;
}

/// Setup document: `base` (a model document), `memory` labels, `inference`
/// [m][o][m'], `control` [m][a], `initial_memory`.
inline RetentiveSetup setup_from_json(const json& j) {
    using detail::field;
    if (!j.contains("base")) throw ValidationError("setup: missing field 'base'");
    const auto base = model_from_json(j.at("base"));
    if (!base.is_stationary()) throw ValidationError("setup.base must be a stationary model");
    const auto memory = field<std::vector<std::string>>(j, "memory", "setup");
    const auto inference = field<std::vector<std::vector<std::vector<double>>>>(j, "inference", "setup");
    const auto control = field<std::vector<std::vector<double>>>(j, "control", "setup");
    const auto init = field<std::vector<double>>(j, "initial_memory", "setup");

    RetentiveSetup s{base.phase(0), memory, {}, detail::to_matrix(control, "setup.control"),
                     Eigen::Map<const Vector>(init.data(), static_cast<Eigen::Index>(init.size()))};
    for (std::size_t m = 0; m < inference.size(); ++m)
        s.inference.push_back(detail::to_matrix(inference[m], detail::concat("setup.inference[", m, "]")));
    validate_setup(s);
    return s;
}

inline json setup_to_json(const RetentiveSetup& s) {
    json j;
    j["base"] = model_to_json(PeriodicPomdpModel(s.base));
    j["memory"] = s.memory;
    j["inference"] = json::array();
    for (const auto& q : s.inference) j["inference"].push_back(detail::from_matrix(q));
    j["control"] = detail::from_matrix(s.control);
    j["initial_memory"] = std::vector<double>(s.initial_memory.data(), s.initial_memory.data() + s.initial_memory.size());
    return j;
}

inline json equivalence_to_json(const EquivalenceReport& r) {
    json j;
    j["ergodic"] = r.ergodic;
    j["diagnosis"] = r.diagnosis;
    j["deviation"] = r.deviation ? json(*r.deviation) : json(nullptr);
    j["retentive_cost_per_step"] = r.retentive_cost;
    j["reduced_cost_per_step"] = r.reduced_cost;
    return j;
}

inline json rollout_to_json(const RolloutStats& s) {
    json j;
    j["steps"] = s.steps;
    j["burn_in"] = s.burn_in;
    j["seed"] = s.seed;
    j["period"] = s.period;
    j["started_stationary"] = s.started_stationary;
    j["cost_mean"] = s.cost_mean;
    j["standard_error"] = detail::number(s.standard_error);
    j["batch_cycles"] = s.batch_cycles;
    j["batches"] = s.batches;
    j["per_cycle_standard_error"] = detail::number(s.per_cycle_standard_error);
    j["occupancy"] = json::array();
    for (const auto& occ : s.occupancy)
        j["occupancy"].push_back(std::vector<double>(occ.data(), occ.data() + occ.size()));
    j["obs_info_nats"] = s.obs_info;
    j["clock_info_nats"] = s.clock_info;
    return j;
}

inline json crosscheck_to_json(const CrosscheckReport& c) {
    return {{"analytic_cost", c.analytic_cost},
            {"empirical_cost", c.empirical_cost},
            {"cost_z", detail::number(c.cost_z)},
            {"occupancy_deviation", c.occupancy_deviation},
            {"occupancy_tolerance", c.occupancy_tolerance},
            {"cost_flagged", c.cost_flagged},
            {"occupancy_flagged", c.occupancy_flagged}};
}

}  // namespace minfo::io
