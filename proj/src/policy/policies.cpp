// SPDX-License-Identifier: Apache-2.0
#include "gnndt/policy/policies.hpp"

#include <algorithm>

#include "gnndt/error.hpp"

namespace gnndt {

std::string to_string(PolicyTag tag) {
    switch (tag) {
        case PolicyTag::random: return "random";
        case PolicyTag::bau: return "bau";
        case PolicyTag::cafap: return "cafap";
        case PolicyTag::optimal: return "optimal";
        case PolicyTag::model: return "model";
    }
    return "?";
}

PolicyTag parse_policy_tag(const std::string& name) {
    for (auto tag : {PolicyTag::random, PolicyTag::bau, PolicyTag::cafap, PolicyTag::optimal, PolicyTag::model}) {
        if (to_string(tag) == name) return tag;
    }
    throw ConfigError("unknown policy tag '" + name + "'");
}

std::vector<double> random_policy(int num_chargers, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> a(num_chargers);
    for (double& v : a) v = dist(rng);
    return a;
}

namespace {

double need_capped_action(const Scenario& scenario, const SimState& state, int i) {
    const auto& s = scenario.sessions[state.connected[i]];
    double need = std::max(0.0, s.e_target - state.battery_energy[i]);
    if (need <= 0.0 || s.p_charge_max <= 0.0) return 0.0;
    return std::min(1.0, need / (s.p_charge_max * scenario.dt()));
}

}  // namespace

std::vector<double> cafap_policy(const Scenario& scenario, const SimState& state) {
    std::vector<double> a(scenario.num_chargers(), 0.0);
    for (int i = 0; i < scenario.num_chargers(); ++i) {
        if (state.connected[i] >= 0) a[i] = need_capped_action(scenario, state, i);
    }
    return a;
}

std::vector<double> bau_round_robin(const Scenario& scenario, const SimState& state, int& pointer) {
    const int n = scenario.num_chargers();
    const int t = std::min(state.t, scenario.horizon() - 1);
    std::vector<double> a(n, 0.0);
    double total = 0.0;
    std::vector<double> group_total(scenario.num_groups(), 0.0);
    pointer = ((pointer % n) + n) % n;
    for (int k = 0; k < n; ++k) {
        const int i = (pointer + k) % n;
        if (state.connected[i] < 0) continue;
        double act = need_capped_action(scenario, state, i);
        if (act <= 0.0) continue;
        const double p = act * scenario.sessions[state.connected[i]].p_charge_max;
        const int g = scenario.charger_group[i];
        if (total + p > scenario.power_setpoint[t] || group_total[g] + p > scenario.group_limits[g][t]) break;
        a[i] = act;
        total += p;
        group_total[g] += p;
    }
    pointer = (pointer + 1) % n;
    return a;
}

std::vector<double> PlanPolicy::act(const Scenario& scenario, const SimState& state) {
    if (state.t < 0 || state.t >= static_cast<int>(plan_.size())) throw ConfigError("plan shorter than the episode");
    return plan_[state.t];
}

}  // namespace gnndt
