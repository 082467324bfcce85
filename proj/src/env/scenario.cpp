// SPDX-License-Identifier: Apache-2.0
#include "gnndt/env/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "gnndt/error.hpp"

namespace gnndt {

namespace {

constexpr int kStayRetries = 1000;

double circular_hour_distance(double a, double b) {
    double d = std::fmod(std::abs(a - b), 24.0);
    return std::min(d, 24.0 - d);
}

double arrival_probability(const ArrivalProcess& p, double hour) {
    double rate = p.base_rate;
    for (double peak : p.peak_hours) {
        double d = circular_hour_distance(hour, peak);
        rate += p.peak_rate * std::exp(-d * d / (2.0 * p.peak_width_hours * p.peak_width_hours));
    }
    return std::clamp(rate, 0.0, 1.0);
}

void require(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}

template <class T>
std::vector<T> get_vec_or(const nlohmann::json& j, const char* key, std::vector<T> fallback) {
    return j.contains(key) ? j.at(key).get<std::vector<T>>() : fallback;
}

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace

std::string to_string(GeneralizationShift shift) {
    switch (shift) {
        case GeneralizationShift::none: return "none";
        case GeneralizationShift::small: return "small";
        case GeneralizationShift::medium: return "medium";
        case GeneralizationShift::extreme: return "extreme";
    }
    return "none";
}

GeneralizationShift parse_shift(const std::string& name) {
    if (name == "none") return GeneralizationShift::none;
    if (name == "small") return GeneralizationShift::small;
    if (name == "medium") return GeneralizationShift::medium;
    if (name == "extreme") return GeneralizationShift::extreme;
    throw ConfigError("unknown generalization_shift '" + name + "'");
}

std::vector<EvModel> default_ev_catalog() {
    return {
        {40.0, 2.0, 7.4, 0.0, 7.4, 0.8},
        {60.0, 3.0, 11.0, 0.0, 11.0, 0.8},
        {77.0, 3.85, 11.0, 0.0, 11.0, 0.8},
    };
}

int ScenarioConfig::steps_per_day() const {
    return std::max(1, static_cast<int>(std::lround(24.0 / dt_hours)));
}

void ScenarioConfig::validate() const {
    require(num_chargers >= 1, "num_chargers must be >= 1");
    require(num_groups >= 1, "num_groups must be >= 1");
    require(horizon >= 1, "horizon must be >= 1");
    require(dt_hours > 0.0 && std::isfinite(dt_hours), "dt_hours must be > 0");
    require(weight_violation > 0.0 && weight_satisfaction > 0.0, "reward weights must be > 0");
    if (!charger_group.empty()) {
        require(static_cast<int>(charger_group.size()) == num_chargers, "charger_group length != num_chargers");
        for (int g : charger_group) require(g >= 0 && g < num_groups, "charger_group entry out of range");
    }
    auto check_len = [&](const std::vector<double>& v, int n, const char* name) {
        require(v.empty() || static_cast<int>(v.size()) == n, std::string(name) + " has the wrong length");
    };
    check_len(charger_max_charge_kw, num_chargers, "charger_max_charge_kw");
    check_len(charger_max_discharge_kw, num_chargers, "charger_max_discharge_kw");
    check_len(price_charge, horizon, "price_charge");
    check_len(price_discharge, horizon, "price_discharge");
    check_len(power_setpoint, horizon, "power_setpoint");
    if (!group_limits.empty()) {
        require(static_cast<int>(group_limits.size()) == num_groups, "group_limits must have one series per group");
        for (const auto& s : group_limits) check_len(s, horizon, "group_limits series");
    }
    require(arrivals.base_rate >= 0.0 && arrivals.peak_rate >= 0.0, "arrival rates must be >= 0");
    require(arrivals.peak_width_hours > 0.0, "peak_width_hours must be > 0");
    require(stay.min_steps >= 1 && stay.min_steps <= stay.max_steps, "stay bounds must satisfy 1 <= min <= max");
    require(stay.log_sigma >= 0.0, "stay log_sigma must be >= 0");
    require(soc.low >= 0.0 && soc.low <= soc.high && soc.high <= 1.0, "soc bounds must satisfy 0 <= low <= high <= 1");
    for (const auto& ev : ev_catalog) {
        require(ev.capacity_kwh > 0.0, "ev capacity must be > 0");
        require(ev.min_energy_kwh >= 0.0 && ev.min_energy_kwh <= ev.capacity_kwh, "ev min energy out of range");
        require(ev.min_charge_kw >= 0.0 && ev.min_charge_kw <= ev.max_charge_kw, "ev charge bounds must satisfy 0 <= min <= max");
        require(ev.max_discharge_kw >= 0.0, "ev discharge magnitude must be >= 0");
        require(ev.target_fraction >= 0.0 && ev.target_fraction <= 1.0, "ev target fraction out of [0,1]");
    }
}

ScenarioConfig apply_shift(ScenarioConfig config, GeneralizationShift shift) {
    switch (shift) {
        case GeneralizationShift::none: break;
        case GeneralizationShift::small:
            for (double& h : config.arrivals.peak_hours) h += 2.0;
            break;
        case GeneralizationShift::medium:
            for (double& h : config.arrivals.peak_hours) h += 4.0;
            config.stay.log_mean += std::log(1.5);
            config.stay.max_steps = static_cast<int>(std::lround(config.stay.max_steps * 1.5));
            break;
        case GeneralizationShift::extreme:
            config.arrivals.uniform = true;
            config.soc.low = 0.05;
            config.soc.high = 0.9;
            config.setpoint.fraction *= 0.5;
            config.setpoint.swing *= 0.5;
            config.setpoint.min_fraction *= 0.5;
            for (double& p : config.power_setpoint) p *= 0.5;
            break;
    }
    return config;
}

void Scenario::validate() const {
    const int n = num_chargers();
    const int horizon_t = horizon();
    std::vector<int> last_departure(n, 0);
    std::vector<const ChargingSession*> by_time;
    for (const auto& s : sessions) by_time.push_back(&s);
    std::sort(by_time.begin(), by_time.end(), [](auto* a, auto* b) {
        return std::tie(a->charger_id, a->t_arrival) < std::tie(b->charger_id, b->t_arrival);
    });
    for (const auto* s : by_time) {
        require(s->charger_id >= 0 && s->charger_id < n, "session charger out of range");
        require(s->group_id == charger_group.at(s->charger_id), "session group disagrees with charger_group");
        require(s->t_arrival >= 0 && s->t_arrival < s->t_departure && s->t_departure <= horizon_t,
                "session must satisfy 0 <= t_arrival < t_departure <= horizon");
        require(s->e_min <= s->e_arrival && s->e_arrival <= s->e_max, "session e_arrival outside [e_min, e_max]");
        require(s->e_min <= s->e_target && s->e_target <= s->e_max, "session e_target outside [e_min, e_max]");
        require(s->p_charge_min <= s->p_charge_max, "session p_charge_min > p_charge_max");
        require(s->t_arrival >= last_departure[s->charger_id], "sessions overlap on a charger");
        last_departure[s->charger_id] = s->t_departure;
    }
}

Scenario generate_scenario(const ScenarioConfig& config, std::uint64_t seed) {
    config.validate();
    const ScenarioConfig eff = apply_shift(config, config.generalization_shift);
    const int n = eff.num_chargers;
    const int horizon_t = eff.horizon;
    const int per_day = eff.steps_per_day();

    Scenario sc;
    sc.config = config;
    sc.seed = seed;
    sc.config.seed = seed;

    sc.charger_group = eff.charger_group;
    if (sc.charger_group.empty()) {
        for (int i = 0; i < n; ++i) sc.charger_group.push_back(i % eff.num_groups);
    }
    sc.charger_max_charge_kw = eff.charger_max_charge_kw.empty() ? std::vector<double>(n, 11.0) : eff.charger_max_charge_kw;
    sc.charger_max_discharge_kw =
        eff.charger_max_discharge_kw.empty() ? std::vector<double>(n, 11.0) : eff.charger_max_discharge_kw;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> price_noise(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    if (eff.price_charge.empty()) {
        sc.price_charge.resize(horizon_t);
        for (int t = 0; t < horizon_t; ++t) {
            double p = eff.prices.base + eff.prices.amplitude * std::sin(2.0 * std::numbers::pi * t / per_day) +
                       eff.prices.noise * price_noise(rng);
            sc.price_charge[t] = std::max(eff.prices.floor, p);
        }
    } else {
        sc.price_charge = eff.price_charge;
    }
    if (eff.price_discharge.empty()) {
        sc.price_discharge.resize(horizon_t);
        for (int t = 0; t < horizon_t; ++t) sc.price_discharge[t] = eff.prices.discharge_ratio * sc.price_charge[t];
    } else {
        sc.price_discharge = eff.price_discharge;
    }

    double total_rating = 0.0;
    for (double r : sc.charger_max_charge_kw) total_rating += r;
    if (eff.power_setpoint.empty()) {
        sc.power_setpoint.resize(horizon_t);
        for (int t = 0; t < horizon_t; ++t) {
            double hour = 24.0 * (t % per_day) / per_day;
            double frac = eff.setpoint.fraction + eff.setpoint.swing * std::cos(2.0 * std::numbers::pi * (hour - 6.0) / 24.0);
            sc.power_setpoint[t] = total_rating * std::max(eff.setpoint.min_fraction, frac);
        }
    } else {
        sc.power_setpoint = eff.power_setpoint;
    }
    if (eff.group_limits.empty()) {
        sc.group_limits.assign(eff.num_groups, std::vector<double>(horizon_t, 0.0));
        std::vector<double> group_rating(eff.num_groups, 0.0);
        for (int i = 0; i < n; ++i) group_rating[sc.charger_group[i]] += sc.charger_max_charge_kw[i];
        for (int g = 0; g < eff.num_groups; ++g) {
            std::fill(sc.group_limits[g].begin(), sc.group_limits[g].end(),
                      group_rating[g] * eff.setpoint.group_limit_fraction);
        }
    } else {
        sc.group_limits = eff.group_limits;
    }

    const std::vector<EvModel> catalog = eff.ev_catalog.empty() ? default_ev_catalog() : eff.ev_catalog;
    double mean_profile = 0.0;
    for (int s = 0; s < per_day; ++s) mean_profile += arrival_probability(eff.arrivals, 24.0 * s / per_day);
    mean_profile /= per_day;

    std::lognormal_distribution<double> stay_dist(eff.stay.log_mean, eff.stay.log_sigma);
    std::uniform_int_distribution<std::size_t> pick_model(0, catalog.size() - 1);
    std::uniform_real_distribution<double> soc_dist(eff.soc.low, eff.soc.high);

    for (int i = 0; i < n; ++i) {
        int ordinal = 0;
        int free_from = 0;
        for (int t = 0; t < horizon_t; ++t) {
            if (t < free_from) continue;
            double hour = 24.0 * (t % per_day) / per_day;
            double p = eff.arrivals.uniform ? mean_profile : arrival_probability(eff.arrivals, hour);
            if (unit(rng) >= p) continue;

            int stay = -1;
            for (int attempt = 0; attempt < kStayRetries; ++attempt) {
                double d = std::round(stay_dist(rng));
                if (d >= eff.stay.min_steps && d <= eff.stay.max_steps) {
                    stay = static_cast<int>(d);
                    break;
                }
            }
            if (stay < 0) {
                throw ConfigError("stay distribution rarely lands in [min_steps, max_steps]; no session fits after " +
                                  std::to_string(kStayRetries) + " retries");
            }
            const EvModel& ev = catalog[pick_model(rng)];
            ChargingSession s;
            s.ordinal = ordinal++;
            s.charger_id = i;
            s.group_id = sc.charger_group[i];
            s.t_arrival = t;
            s.t_departure = std::min(t + stay, horizon_t);
            s.e_max = ev.capacity_kwh;
            s.e_min = ev.min_energy_kwh;
            s.e_arrival = std::clamp(soc_dist(rng) * ev.capacity_kwh, s.e_min, s.e_max);
            s.e_target = std::clamp(ev.target_fraction * ev.capacity_kwh, s.e_min, s.e_max);
            s.p_charge_max = std::min(sc.charger_max_charge_kw[i], ev.max_charge_kw);
            s.p_charge_min = std::min(ev.min_charge_kw, s.p_charge_max);
            s.p_discharge_max_mag = std::min(sc.charger_max_discharge_kw[i], ev.max_discharge_kw);
            sc.sessions.push_back(s);
            free_from = s.t_departure;
        }
    }
    std::stable_sort(sc.sessions.begin(), sc.sessions.end(), [](const auto& a, const auto& b) {
        return std::tie(a.t_arrival, a.charger_id) < std::tie(b.t_arrival, b.charger_id);
    });
    for (std::size_t k = 0; k < sc.sessions.size(); ++k) sc.sessions[k].session_id = static_cast<int>(k);
    sc.validate();
    return sc;
}

// ---- JSON ----

nlohmann::json to_json(const ScenarioConfig& c) {
    nlohmann::json catalog = nlohmann::json::array();
    for (const auto& ev : c.ev_catalog) {
        catalog.push_back({{"capacity_kwh", ev.capacity_kwh},
                           {"min_energy_kwh", ev.min_energy_kwh},
                           {"max_charge_kw", ev.max_charge_kw},
                           {"min_charge_kw", ev.min_charge_kw},
                           {"max_discharge_kw", ev.max_discharge_kw},
                           {"target_fraction", ev.target_fraction}});
    }
    return {
        {"num_chargers", c.num_chargers},
        {"num_groups", c.num_groups},
        {"charger_group", c.charger_group},
        {"charger_max_charge_kw", c.charger_max_charge_kw},
        {"charger_max_discharge_kw", c.charger_max_discharge_kw},
        {"horizon", c.horizon},
        {"dt_hours", c.dt_hours},
        {"price_charge", c.price_charge},
        {"price_discharge", c.price_discharge},
        {"power_setpoint", c.power_setpoint},
        {"group_limits", c.group_limits},
        {"arrivals",
         {{"base_rate", c.arrivals.base_rate},
          {"peak_rate", c.arrivals.peak_rate},
          {"peak_hours", c.arrivals.peak_hours},
          {"peak_width_hours", c.arrivals.peak_width_hours},
          {"uniform", c.arrivals.uniform}}},
        {"stay",
         {{"log_mean", c.stay.log_mean},
          {"log_sigma", c.stay.log_sigma},
          {"min_steps", c.stay.min_steps},
          {"max_steps", c.stay.max_steps}}},
        {"soc", {{"low", c.soc.low}, {"high", c.soc.high}}},
        {"prices",
         {{"base", c.prices.base},
          {"amplitude", c.prices.amplitude},
          {"noise", c.prices.noise},
          {"discharge_ratio", c.prices.discharge_ratio},
          {"floor", c.prices.floor}}},
        {"setpoint",
         {{"fraction", c.setpoint.fraction},
          {"swing", c.setpoint.swing},
          {"min_fraction", c.setpoint.min_fraction},
          {"group_limit_fraction", c.setpoint.group_limit_fraction}}},
        {"ev_catalog", catalog},
        {"seed", c.seed},
        {"weight_violation", c.weight_violation},
        {"weight_satisfaction", c.weight_satisfaction},
        {"generalization_shift", to_string(c.generalization_shift)},
    };
}

ScenarioConfig scenario_config_from_json(const nlohmann::json& j) {
    try {
        ScenarioConfig c;
        c.num_chargers = get_or(j, "num_chargers", c.num_chargers);
        c.num_groups = get_or(j, "num_groups", c.num_groups);
        c.charger_group = get_vec_or<int>(j, "charger_group", {});
        c.charger_max_charge_kw = get_vec_or<double>(j, "charger_max_charge_kw", {});
        c.charger_max_discharge_kw = get_vec_or<double>(j, "charger_max_discharge_kw", {});
        c.horizon = get_or(j, "horizon", c.horizon);
        c.dt_hours = get_or(j, "dt_hours", c.dt_hours);
        c.price_charge = get_vec_or<double>(j, "price_charge", {});
        c.price_discharge = get_vec_or<double>(j, "price_discharge", {});
        c.power_setpoint = get_vec_or<double>(j, "power_setpoint", {});
        if (j.contains("group_limits")) c.group_limits = j.at("group_limits").get<std::vector<std::vector<double>>>();
        if (j.contains("arrivals")) {
            const auto& a = j.at("arrivals");
            c.arrivals.base_rate = get_or(a, "base_rate", c.arrivals.base_rate);
            c.arrivals.peak_rate = get_or(a, "peak_rate", c.arrivals.peak_rate);
            c.arrivals.peak_hours = get_vec_or<double>(a, "peak_hours", c.arrivals.peak_hours);
            c.arrivals.peak_width_hours = get_or(a, "peak_width_hours", c.arrivals.peak_width_hours);
            c.arrivals.uniform = get_or(a, "uniform", c.arrivals.uniform);
        }
        if (j.contains("stay")) {
            const auto& s = j.at("stay");
            c.stay.log_mean = get_or(s, "log_mean", c.stay.log_mean);
            c.stay.log_sigma = get_or(s, "log_sigma", c.stay.log_sigma);
            c.stay.min_steps = get_or(s, "min_steps", c.stay.min_steps);
            c.stay.max_steps = get_or(s, "max_steps", c.stay.max_steps);
        }
        if (j.contains("soc")) {
            c.soc.low = get_or(j.at("soc"), "low", c.soc.low);
            c.soc.high = get_or(j.at("soc"), "high", c.soc.high);
        }
        if (j.contains("prices")) {
            const auto& p = j.at("prices");
            c.prices.base = get_or(p, "base", c.prices.base);
            c.prices.amplitude = get_or(p, "amplitude", c.prices.amplitude);
            c.prices.noise = get_or(p, "noise", c.prices.noise);
            c.prices.discharge_ratio = get_or(p, "discharge_ratio", c.prices.discharge_ratio);
            c.prices.floor = get_or(p, "floor", c.prices.floor);
        }
        if (j.contains("setpoint")) {
            const auto& p = j.at("setpoint");
            c.setpoint.fraction = get_or(p, "fraction", c.setpoint.fraction);
            c.setpoint.swing = get_or(p, "swing", c.setpoint.swing);
            c.setpoint.min_fraction = get_or(p, "min_fraction", c.setpoint.min_fraction);
            c.setpoint.group_limit_fraction = get_or(p, "group_limit_fraction", c.setpoint.group_limit_fraction);
        }
        if (j.contains("ev_catalog")) {
            for (const auto& e : j.at("ev_catalog")) {
                EvModel ev;
                ev.capacity_kwh = get_or(e, "capacity_kwh", ev.capacity_kwh);
                ev.min_energy_kwh = get_or(e, "min_energy_kwh", ev.min_energy_kwh);
                ev.max_charge_kw = get_or(e, "max_charge_kw", ev.max_charge_kw);
                ev.min_charge_kw = get_or(e, "min_charge_kw", ev.min_charge_kw);
                ev.max_discharge_kw = get_or(e, "max_discharge_kw", ev.max_discharge_kw);
                ev.target_fraction = get_or(e, "target_fraction", ev.target_fraction);
                c.ev_catalog.push_back(ev);
            }
        }
        c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
        c.weight_violation = get_or(j, "weight_violation", c.weight_violation);
        c.weight_satisfaction = get_or(j, "weight_satisfaction", c.weight_satisfaction);
        c.generalization_shift = parse_shift(get_or<std::string>(j, "generalization_shift", "none"));
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("scenario config: ") + e.what());
    }
}

nlohmann::json to_json(const Scenario& sc) {
    nlohmann::json sessions = nlohmann::json::array();
    for (const auto& s : sc.sessions) {
        sessions.push_back({{"session_id", s.session_id},
                            {"ordinal", s.ordinal},
                            {"charger_id", s.charger_id},
                            {"group_id", s.group_id},
                            {"t_arrival", s.t_arrival},
                            {"t_departure", s.t_departure},
                            {"e_arrival", s.e_arrival},
                            {"e_target", s.e_target},
                            {"e_min", s.e_min},
                            {"e_max", s.e_max},
                            {"p_charge_max", s.p_charge_max},
                            {"p_charge_min", s.p_charge_min},
                            {"p_discharge_max_mag", s.p_discharge_max_mag}});
    }
    return {
        {"format_version", kScenarioFormatVersion},
        {"config", to_json(sc.config)},
        {"seed", sc.seed},
        {"charger_group", sc.charger_group},
        {"charger_max_charge_kw", sc.charger_max_charge_kw},
        {"charger_max_discharge_kw", sc.charger_max_discharge_kw},
        {"price_charge", sc.price_charge},
        {"price_discharge", sc.price_discharge},
        {"power_setpoint", sc.power_setpoint},
        {"group_limits", sc.group_limits},
        {"sessions", sessions},
    };
}

Scenario scenario_from_json(const nlohmann::json& j) {
    try {
        int version = j.at("format_version").get<int>();
        if (version != kScenarioFormatVersion) {
            throw ConfigError("unsupported scenario format_version " + std::to_string(version));
        }
        Scenario sc;
        sc.config = scenario_config_from_json(j.at("config"));
        sc.seed = j.at("seed").get<std::uint64_t>();
        sc.charger_group = j.at("charger_group").get<std::vector<int>>();
        sc.charger_max_charge_kw = j.at("charger_max_charge_kw").get<std::vector<double>>();
        sc.charger_max_discharge_kw = j.at("charger_max_discharge_kw").get<std::vector<double>>();
        sc.price_charge = j.at("price_charge").get<std::vector<double>>();
        sc.price_discharge = j.at("price_discharge").get<std::vector<double>>();
        sc.power_setpoint = j.at("power_setpoint").get<std::vector<double>>();
        sc.group_limits = j.at("group_limits").get<std::vector<std::vector<double>>>();
        for (const auto& e : j.at("sessions")) {
            ChargingSession s;
            s.session_id = e.at("session_id").get<int>();
            s.ordinal = e.at("ordinal").get<int>();
            s.charger_id = e.at("charger_id").get<int>();
            s.group_id = e.at("group_id").get<int>();
            s.t_arrival = e.at("t_arrival").get<int>();
            s.t_departure = e.at("t_departure").get<int>();
            s.e_arrival = e.at("e_arrival").get<double>();
            s.e_target = e.at("e_target").get<double>();
            s.e_min = e.at("e_min").get<double>();
            s.e_max = e.at("e_max").get<double>();
            s.p_charge_max = e.at("p_charge_max").get<double>();
            s.p_charge_min = e.at("p_charge_min").get<double>();
            s.p_discharge_max_mag = e.at("p_discharge_max_mag").get<double>();
            sc.sessions.push_back(s);
        }
        const int n = sc.num_chargers();
        const int horizon_t = sc.horizon();
        require(static_cast<int>(sc.charger_group.size()) == n, "charger_group length != num_chargers");
        require(static_cast<int>(sc.charger_max_charge_kw.size()) == n, "charger_max_charge_kw length != num_chargers");
        require(static_cast<int>(sc.charger_max_discharge_kw.size()) == n,
                "charger_max_discharge_kw length != num_chargers");
        require(static_cast<int>(sc.price_charge.size()) == horizon_t, "price_charge length != horizon");
        require(static_cast<int>(sc.price_discharge.size()) == horizon_t, "price_discharge length != horizon");
        require(static_cast<int>(sc.power_setpoint.size()) == horizon_t, "power_setpoint length != horizon");
        require(static_cast<int>(sc.group_limits.size()) == sc.num_groups(), "group_limits count != num_groups");
        for (const auto& g : sc.group_limits) require(static_cast<int>(g.size()) == horizon_t, "group limit length != horizon");
        sc.validate();
        return sc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("scenario document: ") + e.what());
    }
}

void save_scenario(const Scenario& scenario, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw RuntimeFailure("cannot write " + path);
    out << to_json(scenario).dump(2) << '\n';
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return scenario_from_json(j);
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << h;
    return os.str();
}

std::string scenario_digest(const Scenario& scenario) { return fnv1a_hex(to_json(scenario).dump()); }

}  // namespace gnndt
