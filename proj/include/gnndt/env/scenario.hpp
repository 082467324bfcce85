// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace gnndt {

enum class GeneralizationShift { none, small, medium, extreme };

std::string to_string(GeneralizationShift shift);
GeneralizationShift parse_shift(const std::string& name);

/// One EV model in the synthetic fleet. Energies in kWh, powers in kW.
struct EvModel {
    double capacity_kwh = 60.0;
    double min_energy_kwh = 3.0;
    double max_charge_kw = 11.0;
    double min_charge_kw = 0.0;
    double max_discharge_kw = 11.0;
    double target_fraction = 0.8;
};

/// Bernoulli arrival probability per free charger per step, with a bimodal day profile:
///   p(h) = base_rate + peak_rate * sum_k exp(-d(h, peak_k)^2 / (2 width^2))
/// where d is the circular hour distance. `uniform` flattens the profile to its daily mean.
struct ArrivalProcess {
    double base_rate = 0.02;
    double peak_rate = 0.30;
    std::vector<double> peak_hours{8.0, 17.5};
    double peak_width_hours = 1.5;
    bool uniform = false;
};

/// Lognormal stay duration in steps, truncated to [min_steps, max_steps] by rejection.
struct StayDistribution {
    double log_mean = 2.77;  // median ~16 steps (4 h at 15 min)
    double log_sigma = 0.45;
    int min_steps = 4;
    int max_steps = 40;
};

/// State of charge at arrival, uniform on [low, high] of capacity.
struct SocDistribution {
    double low = 0.2;
    double high = 0.6;
};

/// Charge price pi(t) = base + amplitude * sin(2 pi t / steps_per_day) + N(0, noise); discharge = ratio * charge.
struct PriceModel {
    double base = 0.20;
    double amplitude = 0.10;
    double noise = 0.02;
    double discharge_ratio = 0.9;
    double floor = 0.01;
};

/// p*(t) = total charger rating * max(min_fraction, fraction + swing * cos(2 pi (h - 6) / 24)); lowest at 18:00.
/// Group limits are a constant fraction of the group's summed rating.
struct SetpointModel {
    double fraction = 0.45;
    double swing = 0.15;
    double min_fraction = 0.05;
    double group_limit_fraction = 0.8;
};

struct ScenarioConfig {
    int num_chargers = 3;
    int num_groups = 1;
    std::vector<int> charger_group;           // empty: charger i -> i % num_groups
    std::vector<double> charger_max_charge_kw;     // empty: 11 kW each
    std::vector<double> charger_max_discharge_kw;  // empty: 11 kW each
    int horizon = 300;
    double dt_hours = 0.25;

    // Explicit series override the synthetic models when non-empty (length must be horizon).
    std::vector<double> price_charge;
    std::vector<double> price_discharge;
    std::vector<double> power_setpoint;
    std::vector<std::vector<double>> group_limits;

    ArrivalProcess arrivals;
    StayDistribution stay;
    SocDistribution soc;
    PriceModel prices;
    SetpointModel setpoint;
    std::vector<EvModel> ev_catalog;  // empty: built-in three-model fleet

    std::uint64_t seed = 0;
    double weight_violation = 100.0;
    double weight_satisfaction = 10.0;
    GeneralizationShift generalization_shift = GeneralizationShift::none;

    int steps_per_day() const;
    /// Throws ConfigError when an invariant does not hold.
    void validate() const;
};

std::vector<EvModel> default_ev_catalog();

struct ChargingSession {
    int session_id = 0;  // unique within the scenario
    int ordinal = 0;     // j: index of this session among those seen by its charger
    int charger_id = 0;
    int group_id = 0;
    int t_arrival = 0;
    int t_departure = 0;
    double e_arrival = 0.0;
    double e_target = 0.0;
    double e_min = 0.0;
    double e_max = 0.0;
    double p_charge_max = 0.0;
    double p_charge_min = 0.0;
    double p_discharge_max_mag = 0.0;
};

/// A config with every series resolved, plus the explicit session list.
struct Scenario {
    ScenarioConfig config;
    std::uint64_t seed = 0;
    std::vector<int> charger_group;
    std::vector<double> charger_max_charge_kw;
    std::vector<double> charger_max_discharge_kw;
    std::vector<double> price_charge;
    std::vector<double> price_discharge;
    std::vector<double> power_setpoint;
    std::vector<std::vector<double>> group_limits;  // [group][t]
    std::vector<ChargingSession> sessions;

    int num_chargers() const { return config.num_chargers; }
    int num_groups() const { return config.num_groups; }
    int horizon() const { return config.horizon; }
    double dt() const { return config.dt_hours; }

    /// Throws ConfigError if the session list breaks a ChargingSession invariant.
    void validate() const;
};

/// Deterministic in (config, seed). Throws ConfigError on invalid configs or when the
/// truncated stay distribution cannot be sampled within the retry bound.
Scenario generate_scenario(const ScenarioConfig& config, std::uint64_t seed);

/// Applies a generalization preset to a base config (arrival shift, stay stretch, SoC spread, setpoint cut).
ScenarioConfig apply_shift(ScenarioConfig config, GeneralizationShift shift);

inline constexpr int kScenarioFormatVersion = 1;

nlohmann::json to_json(const ScenarioConfig& config);
ScenarioConfig scenario_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Scenario& scenario);
Scenario scenario_from_json(const nlohmann::json& j);

void save_scenario(const Scenario& scenario, const std::string& path);
Scenario load_scenario(const std::string& path);

/// FNV-1a 64 over the canonical JSON dump, hex encoded.
std::string scenario_digest(const Scenario& scenario);
std::string fnv1a_hex(const std::string& bytes);

}  // namespace gnndt
