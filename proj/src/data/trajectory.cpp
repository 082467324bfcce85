// SPDX-License-Identifier: Apache-2.0
#include "gnndt/data/trajectory.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "gnndt/error.hpp"

namespace gnndt {

double Trajectory::episode_reward() const {
    double total = 0.0;
    for (const auto& s : steps) total += s.reward;
    return total;
}

std::vector<double> Trajectory::rewards() const {
    std::vector<double> r;
    r.reserve(steps.size());
    for (const auto& s : steps) r.push_back(s.reward);
    return r;
}

DatasetMeta summarize(const std::vector<Trajectory>& trajectories) {
    DatasetMeta meta;
    meta.count = trajectories.size();
    meta.source_mix.clear();
    if (trajectories.empty()) return meta;
    double sum = 0.0;
    for (const auto& t : trajectories) {
        sum += t.episode_reward();
        meta.source_mix[to_string(t.policy_tag)] += 1.0;
    }
    meta.avg_reward = sum / trajectories.size();
    double ss = 0.0;
    for (const auto& t : trajectories) ss += (t.episode_reward() - meta.avg_reward) * (t.episode_reward() - meta.avg_reward);
    meta.std_reward = trajectories.size() > 1 ? std::sqrt(ss / (trajectories.size() - 1)) : 0.0;
    for (auto& [tag, frac] : meta.source_mix) frac /= trajectories.size();
    meta.gamma = trajectories.front().gamma;
    return meta;
}

void Dataset::refresh_meta() {
    const double gamma = meta.gamma;
    meta = summarize(trajectories);
    if (trajectories.empty()) meta.gamma = gamma;
}

std::vector<double> compute_rtg(std::span<const double> rewards, double gamma) {
    if (rewards.empty()) throw ConfigError("compute_rtg needs at least one reward");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
    std::vector<double> g(rewards.size());
    g.back() = rewards.back();
    for (std::size_t k = rewards.size() - 1; k-- > 0;) g[k] = rewards[k] + gamma * g[k + 1];
    return g;
}

Trajectory begin_trajectory(std::shared_ptr<const Scenario> scenario, PolicyTag tag, double gamma) {
    Trajectory tr;
    tr.scenario_digest = scenario_digest(*scenario);
    tr.policy_tag = tag;
    tr.gamma = gamma;
    tr.dt_hours = scenario->dt();
    tr.steps.reserve(scenario->horizon());
    tr.scenario = std::move(scenario);
    return tr;
}

StepOutcome append_step(Trajectory& tr, const SimState& state, std::vector<double> action, StateGraph graph) {
    const Scenario& sc = *tr.scenario;
    const int t = state.t;
    TrajectoryStep st;
    st.graph = std::move(graph);
    st.mask = action_mask(state);
    st.action = std::move(action);
    StepOutcome o = step(sc, state, st.action);
    st.reward = o.reward.total;
    st.breakdown = o.reward;
    st.applied_kw = o.applied_kw;
    st.departures = o.departures;
    st.price_charge = sc.price_charge[t];
    st.price_discharge = sc.price_discharge[t];
    st.power_setpoint = sc.power_setpoint[t];
    tr.steps.push_back(std::move(st));
    return o;
}

void finish_trajectory(Trajectory& tr) { tr.rtg = compute_rtg(tr.rewards(), tr.gamma); }

Trajectory record_trajectory(Policy& policy, std::shared_ptr<const Scenario> scenario, double gamma) {
    const Scenario& sc = *scenario;
    Trajectory tr = begin_trajectory(scenario, policy.tag(), gamma);
    policy.reset(sc);
    SimState state = initial_state(sc);
    for (int t = 0; t < sc.horizon(); ++t) {
        auto action = policy.act(sc, state);
        StepOutcome o = append_step(tr, state, std::move(action), build_state_graph(state, sc));
        policy.observe(o);
        state = std::move(o.next);
    }
    finish_trajectory(tr);
    return tr;
}

std::vector<double> replay_rewards(const Trajectory& tr) {
    if (!tr.scenario) throw ConfigError("trajectory carries no scenario to replay against");
    const Scenario& sc = *tr.scenario;
    SimState state = initial_state(sc);
    std::vector<double> out;
    for (const auto& st : tr.steps) {
        StepOutcome o = step(sc, state, st.action);
        out.push_back(o.reward.total);
        state = std::move(o.next);
    }
    return out;
}

Dataset mix_datasets(const Dataset& a, const Dataset& b, double frac_a, std::size_t total, std::uint64_t seed) {
    if (!(frac_a >= 0.0 && frac_a <= 1.0)) throw ConfigError("frac_a must lie in [0, 1]");
    const auto n_a = static_cast<std::size_t>(std::llround(frac_a * static_cast<double>(total)));
    const std::size_t n_b = total - n_a;
    if (n_a > a.size() || n_b > b.size()) {
        throw ConfigError("insufficient source size: need " + std::to_string(n_a) + "+" + std::to_string(n_b) +
                          " trajectories, have " + std::to_string(a.size()) + "+" + std::to_string(b.size()));
    }
    std::mt19937_64 rng(seed);
    auto pick = [&](const Dataset& src, std::size_t n, Dataset& out) {
        std::vector<std::size_t> idx(src.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t k = 0; k < n; ++k) out.trajectories.push_back(src.trajectories[idx[k]]);
    };
    Dataset mixed;
    pick(a, n_a, mixed);
    pick(b, n_b, mixed);
    std::shuffle(mixed.trajectories.begin(), mixed.trajectories.end(), rng);
    mixed.refresh_meta();
    return mixed;
}

int Window::padded() const {
    return static_cast<int>(std::count_if(positions.begin(), positions.end(), [](const auto& p) { return p.pad; }));
}

Window make_window(const Dataset& dataset, int index, int end_step, int K) {
    const Trajectory& tr = dataset.trajectories.at(index);
    if (end_step < 0 || end_step >= tr.length()) throw ConfigError("window end step outside the trajectory");
    Window w;
    w.trajectory = index;
    w.end_step = end_step;
    w.positions.resize(K);
    for (int k = 0; k < K; ++k) {
        const int s = end_step - (K - 1) + k;
        auto& pos = w.positions[k];
        if (s < 0) continue;
        pos.pad = false;
        pos.step = &tr.steps[s];
        pos.prev = s > 0 ? &tr.steps[s - 1] : nullptr;
        pos.rtg = tr.rtg[s];
        pos.timestep = s;
    }
    return w;
}

std::vector<Window> sample_window(const Dataset& dataset, int K, int batch, std::mt19937_64& rng) {
    if (K < 1) throw ConfigError("window length K must be >= 1");
    if (dataset.trajectories.empty()) throw ConfigError("cannot sample from an empty dataset");
    std::vector<std::size_t> prefix{0};
    int shortest = dataset.trajectories.front().length();
    for (const auto& t : dataset.trajectories) {
        prefix.push_back(prefix.back() + t.steps.size());
        shortest = std::min(shortest, t.length());
    }
    if (K > shortest) throw ConfigError("window length K exceeds the episode horizon");
    std::uniform_int_distribution<std::size_t> pick(0, prefix.back() - 1);
    std::vector<Window> out;
    out.reserve(batch);
    for (int b = 0; b < batch; ++b) {
        std::size_t u = pick(rng);
        auto it = std::upper_bound(prefix.begin(), prefix.end(), u);
        int index = static_cast<int>(it - prefix.begin()) - 1;
        out.push_back(make_window(dataset, index, static_cast<int>(u - prefix[index]), K));
    }
    return out;
}

// ---- serialization ----

nlohmann::json to_json(const Trajectory& tr) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& st : tr.steps) {
        nlohmann::json deps = nlohmann::json::array();
        for (const auto& d : st.departures) deps.push_back({d.session_id, d.charger_id, d.energy_kwh, d.target_kwh});
        steps.push_back({{"graph", to_json(st.graph)},
                         {"action", st.action},
                         {"mask", st.mask},
                         {"reward", st.reward},
                         {"breakdown",
                          {st.breakdown.energy_term, st.breakdown.violation_kw, st.breakdown.satisfaction_penalty,
                           st.breakdown.total}},
                         {"applied_kw", st.applied_kw},
                         {"departures", deps},
                         {"prices", {st.price_charge, st.price_discharge}},
                         {"setpoint", st.power_setpoint}});
    }
    nlohmann::json j = {{"scenario_digest", tr.scenario_digest},
                        {"policy_tag", to_string(tr.policy_tag)},
                        {"gamma", tr.gamma},
                        {"dt_hours", tr.dt_hours},
                        {"steps", steps},
                        {"rtg", tr.rtg}};
    if (tr.scenario) j["scenario"] = to_json(*tr.scenario);
    return j;
}

Trajectory trajectory_from_json(const nlohmann::json& j) {
    try {
        Trajectory tr;
        tr.scenario_digest = j.at("scenario_digest").get<std::string>();
        tr.policy_tag = parse_policy_tag(j.at("policy_tag").get<std::string>());
        tr.gamma = j.at("gamma").get<double>();
        tr.dt_hours = j.at("dt_hours").get<double>();
        tr.rtg = j.at("rtg").get<std::vector<double>>();
        if (j.contains("scenario")) tr.scenario = std::make_shared<const Scenario>(scenario_from_json(j.at("scenario")));
        for (const auto& s : j.at("steps")) {
            TrajectoryStep st;
            st.graph = state_graph_from_json(s.at("graph"));
            st.action = s.at("action").get<std::vector<double>>();
            st.mask = s.at("mask").get<ActionMask>();
            st.reward = s.at("reward").get<double>();
            auto b = s.at("breakdown").get<std::vector<double>>();
            if (b.size() != 4) throw ConfigError("reward breakdown must have 4 entries");
            st.breakdown = {b[0], b[1], b[2], b[3]};
            st.applied_kw = s.at("applied_kw").get<std::vector<double>>();
            for (const auto& d : s.at("departures")) {
                st.departures.push_back(
                    {d.at(0).get<int>(), d.at(1).get<int>(), d.at(2).get<double>(), d.at(3).get<double>()});
            }
            auto prices = s.at("prices").get<std::vector<double>>();
            if (prices.size() != 2) throw ConfigError("step prices must have 2 entries");
            st.price_charge = prices[0];
            st.price_discharge = prices[1];
            st.power_setpoint = s.at("setpoint").get<double>();
            tr.steps.push_back(std::move(st));
        }
        if (tr.rtg.size() != tr.steps.size()) throw ConfigError("rtg length != step count");
        return tr;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("trajectory record: ") + e.what());
    }
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string dataset_digest(const Dataset& d) {
    std::string all;
    for (const auto& t : d.trajectories) all += t.scenario_digest;
    return fnv1a_hex(all);
}

}  // namespace

void save_dataset(const Dataset& dataset, const std::string& path) {
    const DatasetMeta m = summarize(dataset.trajectories);
    nlohmann::json header = {{"format_version", kDatasetFormatVersion},
                             {"scenario_digest", dataset_digest(dataset)},
                             {"gamma", m.gamma},
                             {"count", m.count},
                             {"avg_reward", m.avg_reward},
                             {"std_reward", m.std_reward},
                             {"source_mix", m.source_mix}};
    const std::string mode = ends_with(path, ".gz") ? "wb6" : "wbT";
    gzFile f = gzopen(path.c_str(), mode.c_str());
    if (!f) throw RuntimeFailure("cannot write dataset " + path);
    auto write_line = [&](const nlohmann::json& j) {
        std::string line = j.dump() + "\n";
        if (gzwrite(f, line.data(), static_cast<unsigned>(line.size())) != static_cast<int>(line.size())) {
            gzclose(f);
            throw RuntimeFailure("short write on " + path);
        }
    };
    write_line(header);
    for (const auto& t : dataset.trajectories) write_line(to_json(t));
    if (gzclose(f) != Z_OK) throw RuntimeFailure("failed to close " + path);
}

Dataset load_dataset(const std::string& path) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw ConfigError("cannot open dataset " + path);
    std::string content;
    std::vector<char> buf(1 << 16);
    int got = 0;
    while ((got = gzread(f, buf.data(), static_cast<unsigned>(buf.size()))) > 0) content.append(buf.data(), got);
    gzclose(f);
    if (got < 0) throw ConfigError("corrupt dataset stream " + path);

    std::istringstream in(content);
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("dataset " + path + " is empty");
    Dataset d;
    try {
        auto header = nlohmann::json::parse(line);
        int version = header.at("format_version").get<int>();
        if (version != kDatasetFormatVersion) throw ConfigError("unsupported dataset format_version " + std::to_string(version));
        d.meta.gamma = header.at("gamma").get<double>();
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            d.trajectories.push_back(trajectory_from_json(nlohmann::json::parse(line)));
        }
        if (d.trajectories.size() != header.at("count").get<std::size_t>()) {
            throw ConfigError("dataset " + path + " header count disagrees with its records");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    d.refresh_meta();
    return d;
}

}  // namespace gnndt
