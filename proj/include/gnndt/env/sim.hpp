// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "gnndt/env/scenario.hpp"

namespace gnndt {

using ActionMask = std::vector<std::uint8_t>;

/// Environment snapshot at the start of step `t`.
struct SimState {
    int t = 0;
    std::vector<int> connected;          // per charger: index into Scenario::sessions, or -1
    std::vector<double> battery_energy;  // per charger, kWh; meaningful only when connected
    double prev_total_power = 0.0;       // net kW applied at t-1 (0 at t = 0)

    int num_connected() const;
    bool operator==(const SimState&) const = default;
};

struct RewardBreakdown {
    double energy_term = 0.0;           // EUR, revenue minus cost
    double violation_kw = 0.0;          // max(0, p_sum - p*)
    double satisfaction_penalty = 0.0;  // kWh^2, summed over departures this step
    double total = 0.0;
    bool operator==(const RewardBreakdown&) const = default;
};

struct Departure {
    int session_id = 0;
    int charger_id = 0;
    double energy_kwh = 0.0;
    double target_kwh = 0.0;
    bool operator==(const Departure&) const = default;
};

struct StepOutcome {
    SimState next;
    RewardBreakdown reward;
    ActionMask next_mask;
    std::vector<double> applied_kw;  // per charger; >= 0 charge, < 0 discharge
    std::vector<Departure> departures;
};

/// State at t = 0 with sessions arriving at step 0 already connected.
SimState initial_state(const Scenario& scenario);

/// Bit i is 1 iff a session is connected at charger i.
ActionMask action_mask(const SimState& state);

/// Kilowatts requested by an action value before battery and group feasibility are applied.
double requested_power(const ChargingSession& session, double action);

/// One transition. Masked entries act as zero; requests are clipped to battery bounds and then
/// charging power is scaled down per group so the group's net power stays within its limit.
/// Throws ConfigError on length mismatch or when `state.t >= horizon`.
StepOutcome step(const Scenario& scenario, const SimState& state, std::span<const double> action);

/// Stateful convenience wrapper over `step`.
class ChargingEnv {
public:
    explicit ChargingEnv(std::shared_ptr<const Scenario> scenario);

    const SimState& reset();
    StepOutcome step(std::span<const double> action);

    const SimState& state() const { return state_; }
    const Scenario& scenario() const { return *scenario_; }
    std::shared_ptr<const Scenario> scenario_ptr() const { return scenario_; }
    ActionMask mask() const { return action_mask(state_); }
    bool done() const { return state_.t >= scenario_->horizon(); }

private:
    std::shared_ptr<const Scenario> scenario_;
    SimState state_;
};

}  // namespace gnndt
