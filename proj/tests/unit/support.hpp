// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "gnndt/env/scenario.hpp"
#include "gnndt/policy/oracle.hpp"

namespace gnndt::testing {

/// Scenario with explicit flat series and a hand-written session list. No random arrivals.
inline Scenario manual_scenario(int chargers, int horizon, double price, double setpoint,
                                std::vector<ChargingSession> sessions, int groups = 1, double group_limit = 1e9) {
    ScenarioConfig c;
    c.num_chargers = chargers;
    c.num_groups = groups;
    c.horizon = horizon;
    c.arrivals.base_rate = 0.0;
    c.arrivals.peak_rate = 0.0;
    c.price_charge.assign(horizon, price);
    c.price_discharge.assign(horizon, 0.9 * price);
    c.power_setpoint.assign(horizon, setpoint);
    c.group_limits.assign(groups, std::vector<double>(horizon, group_limit));
    Scenario sc = generate_scenario(c, 0);
    for (auto& s : sessions) s.group_id = sc.charger_group.at(s.charger_id);
    sc.sessions = std::move(sessions);
    for (std::size_t k = 0; k < sc.sessions.size(); ++k) sc.sessions[k].session_id = static_cast<int>(k);
    sc.validate();
    return sc;
}

inline ChargingSession session(int charger, int t_arr, int t_dep, double e_arr, double e_target, double e_max = 60.0,
                               double p_max = 11.0, double p_dis = 11.0, double e_min = 0.0) {
    ChargingSession s;
    s.charger_id = charger;
    s.t_arrival = t_arr;
    s.t_departure = t_dep;
    s.e_arrival = e_arr;
    s.e_target = e_target;
    s.e_max = e_max;
    s.e_min = e_min;
    s.p_charge_max = p_max;
    s.p_discharge_max_mag = p_dis;
    return s;
}

/// Small synthetic config used across suites.
inline ScenarioConfig small_config(int chargers = 3, int horizon = 96) {
    ScenarioConfig c;
    c.num_chargers = chargers;
    c.horizon = horizon;
    return c;
}

struct TinyInstance {
    Scenario scenario;
    DiscretizationSpec grid;
};

/// Random instance small enough for exhaustive enumeration: 1-2 chargers, 3-6 steps, 3-5 levels,
/// busy arrivals and a setpoint that binds part of the time.
inline TinyInstance tiny_instance(std::uint64_t seed) {
    std::mt19937_64 rng(seed * 7919 + 13);
    std::uniform_int_distribution<int> chargers(1, 2), steps(3, 6), levels(3, 5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ScenarioConfig c;
    c.num_chargers = chargers(rng);
    c.horizon = steps(rng);
    c.dt_hours = 0.25;
    c.arrivals.base_rate = 0.35 + 0.4 * u(rng);
    c.arrivals.peak_rate = 0.0;
    c.stay.min_steps = 1;
    c.stay.max_steps = 5;
    c.stay.log_mean = 0.8;
    c.stay.log_sigma = 0.6;
    c.soc.low = 0.55;
    c.soc.high = 0.78;
    c.ev_catalog = {{40.0, 2.0, 7.4, 0.0, 7.4, 0.8}, {20.0, 1.0, 11.0, 0.0, 11.0, 0.8}};
    c.power_setpoint.resize(c.horizon);
    for (auto& p : c.power_setpoint) p = 4.0 + 14.0 * u(rng);
    TinyInstance inst;
    const int L = levels(rng);
    if (L == 3) inst.grid.levels = {-1.0, 0.0, 1.0};
    if (L == 4) inst.grid.levels = {-1.0, 0.0, 0.5, 1.0};
    if (L == 5) inst.grid.levels = {-1.0, -0.5, 0.0, 0.5, 1.0};
    // keep the leaf count enumerable in well under a second
    for (std::uint64_t k = 0;; ++k) {
        inst.scenario = generate_scenario(c, seed + 1000003 * k);
        if (log_search_size(inst.scenario, inst.grid) <= std::log(1e5)) break;
    }
    return inst;
}

}  // namespace gnndt::testing
