#pragma once

#include <optional>
#include <string>
#include <vector>

#include "minfo/model.hpp"

namespace minfo::builtins {

/// Two states {L, R}, one uninformative observation, actions {left, right}
/// that deterministically set the next state. Switching sides earns a unit
/// reward (cost -1).
inline PomdpModel two_state() {
    RawModel r;
    r.states = {"L", "R"};
    r.observations = {"o"};
    r.actions = {"left", "right"};
    r.transition = {{{1.0, 0.0}, {0.0, 1.0}}, {{1.0, 0.0}, {0.0, 1.0}}};
    r.observation = {{1.0}, {1.0}};
    r.cost = {{0.0, -1.0}, {-1.0, 0.0}};
    return PomdpModel(r);
}

/// Corridor robot carrying items from the left end to the right end.
///
/// States {LL, RL, LU, RU} (end of corridor x loaded/unloaded), actions
/// {left, right, load, unload}. Drawn moves succeed with probability 0.8 and
/// otherwise leave the state unchanged; every other state-action pair is a
/// no-op. Unloading at the right end while loaded costs -1 per attempt.
/// Observations are the product of a location sensor (correct w.p. 0.88)
/// and a load sensor (correct w.p. 0.7), labelled like the states.
inline PomdpModel robot() {
    constexpr double success = 0.8;
    constexpr double location_accuracy = 0.88;
    constexpr double load_accuracy = 0.7;
    enum { LL, RL, LU, RU };
    enum { left, right, load, unload };

    RawModel r;
    r.states = {"LL", "RL", "LU", "RU"};
    r.observations = {"LL", "RL", "LU", "RU"};
    r.actions = {"left", "right", "load", "unload"};
    r.transition.assign(4, std::vector<std::vector<double>>(4, std::vector<double>(4, 0.0)));
    for (int s = 0; s < 4; ++s)
        for (int a = 0; a < 4; ++a) r.transition[s][a][s] = 1.0;
    auto move = [&](int from, int action, int to) {
        r.transition[from][action][from] = 1.0 - success;
        r.transition[from][action][to] = success;
    };
    move(LL, right, RL);
    move(RL, left, LL);
    move(LU, load, LL);
    move(LL, unload, LU);
    move(RL, unload, RU);
    move(LU, right, RU);
    move(RU, left, LU);

    // state index -> (is_right, is_loaded)
    auto is_right = [](int s) { return s == RL || s == RU; };
    auto is_loaded = [](int s) { return s == LL || s == RL; };
    r.observation.assign(4, std::vector<double>(4, 0.0));
    for (int s = 0; s < 4; ++s)
        for (int o = 0; o < 4; ++o) {
            const double loc = is_right(s) == is_right(o) ? location_accuracy : 1.0 - location_accuracy;
            const double ld = is_loaded(s) == is_loaded(o) ? load_accuracy : 1.0 - load_accuracy;
            r.observation[s][o] = loc * ld;
        }
    r.cost.assign(4, std::vector<double>(4, 0.0));
    r.cost[RL][unload] = -1.0;
    return PomdpModel(r);
}

inline std::vector<std::string> names() { return {"two-state", "robot"}; }

inline std::optional<PomdpModel> by_name(const std::string& name) {
    if (name == "two-state") return two_state();
    if (name == "robot") return robot();
    return std::nullopt;
}

}  // namespace minfo::builtins
