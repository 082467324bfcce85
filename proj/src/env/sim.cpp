// SPDX-License-Identifier: Apache-2.0
#include "gnndt/env/sim.hpp"

#include <algorithm>
#include <cmath>

#include "gnndt/error.hpp"

namespace gnndt {

namespace {

void connect_arrivals(const Scenario& scenario, SimState& state) {
    for (std::size_t k = 0; k < scenario.sessions.size(); ++k) {
        const auto& s = scenario.sessions[k];
        if (s.t_arrival == state.t) {
            state.connected[s.charger_id] = static_cast<int>(k);
            state.battery_energy[s.charger_id] = s.e_arrival;
        }
    }
}

}  // namespace

int SimState::num_connected() const {
    return static_cast<int>(std::count_if(connected.begin(), connected.end(), [](int c) { return c >= 0; }));
}

SimState initial_state(const Scenario& scenario) {
    SimState s;
    s.t = 0;
    s.connected.assign(scenario.num_chargers(), -1);
    s.battery_energy.assign(scenario.num_chargers(), 0.0);
    s.prev_total_power = 0.0;
    connect_arrivals(scenario, s);
    return s;
}

ActionMask action_mask(const SimState& state) {
    ActionMask m(state.connected.size(), 0);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = state.connected[i] >= 0 ? 1 : 0;
    return m;
}

double requested_power(const ChargingSession& session, double action) {
    double a = std::clamp(action, -1.0, 1.0);
    double p = a >= 0.0 ? a * session.p_charge_max : a * session.p_discharge_max_mag;
    if (p > 0.0 && p < session.p_charge_min) p = 0.0;
    return p;
}

StepOutcome step(const Scenario& scenario, const SimState& state, std::span<const double> action) {
    const int n = scenario.num_chargers();
    if (static_cast<int>(action.size()) != n) {
        throw ConfigError("action length " + std::to_string(action.size()) + " != num_chargers " + std::to_string(n));
    }
    if (state.t < 0 || state.t >= scenario.horizon()) {
        throw ConfigError("step called at t=" + std::to_string(state.t) + " outside [0, horizon)");
    }
    const int t = state.t;
    const double dt = scenario.dt();

    StepOutcome out;
    out.applied_kw.assign(n, 0.0);

    for (int i = 0; i < n; ++i) {
        int k = state.connected[i];
        if (k < 0) continue;
        const auto& s = scenario.sessions[k];
        double p = requested_power(s, action[i]);
        double e = state.battery_energy[i];
        double p_hi = (s.e_max - e) / dt;
        double p_lo = (s.e_min - e) / dt;
        out.applied_kw[i] = std::clamp(p, std::min(p_lo, 0.0), std::max(p_hi, 0.0));
    }

    for (int g = 0; g < scenario.num_groups(); ++g) {
        double charge = 0.0;
        double discharge = 0.0;
        for (int i = 0; i < n; ++i) {
            if (scenario.charger_group[i] != g) continue;
            double p = out.applied_kw[i];
            (p > 0.0 ? charge : discharge) += p;
        }
        const double limit = scenario.group_limits[g][t];
        if (charge > 0.0 && charge + discharge > limit) {
            double scale = std::clamp((limit - discharge) / charge, 0.0, 1.0);
            for (int i = 0; i < n; ++i) {
                if (scenario.charger_group[i] != g || out.applied_kw[i] <= 0.0) continue;
                double p = out.applied_kw[i] * scale;
                const auto& s = scenario.sessions[state.connected[i]];
                out.applied_kw[i] = p < s.p_charge_min ? 0.0 : p;
            }
        }
    }

    SimState next = state;
    double total = 0.0;
    double energy = 0.0;
    for (int i = 0; i < n; ++i) {
        double p = out.applied_kw[i];
        total += p;
        if (state.connected[i] < 0) continue;
        next.battery_energy[i] = state.battery_energy[i] + p * dt;
        energy += p >= 0.0 ? scenario.price_charge[t] * p : scenario.price_discharge[t] * p;
    }
    out.reward.energy_term = -dt * energy;
    out.reward.violation_kw = std::max(0.0, total - scenario.power_setpoint[t]);

    for (int i = 0; i < n; ++i) {
        int k = state.connected[i];
        if (k < 0) continue;
        const auto& s = scenario.sessions[k];
        if (s.t_departure != t + 1) continue;
        double gap = next.battery_energy[i] - s.e_target;
        out.reward.satisfaction_penalty += gap * gap;
        out.departures.push_back({s.session_id, i, next.battery_energy[i], s.e_target});
        next.connected[i] = -1;
        next.battery_energy[i] = 0.0;
    }
    const auto& cfg = scenario.config;
    out.reward.total = out.reward.energy_term - cfg.weight_violation * out.reward.violation_kw -
                       cfg.weight_satisfaction * out.reward.satisfaction_penalty;

    next.t = t + 1;
    next.prev_total_power = total;
    if (next.t < scenario.horizon()) connect_arrivals(scenario, next);
    out.next_mask = action_mask(next);
    out.next = std::move(next);
    return out;
}

ChargingEnv::ChargingEnv(std::shared_ptr<const Scenario> scenario) : scenario_(std::move(scenario)) {
    state_ = initial_state(*scenario_);
}

const SimState& ChargingEnv::reset() {
    state_ = initial_state(*scenario_);
    return state_;
}

StepOutcome ChargingEnv::step(std::span<const double> action) {
    StepOutcome out = gnndt::step(*scenario_, state_, action);
    state_ = out.next;
    return out;
}

}  // namespace gnndt
