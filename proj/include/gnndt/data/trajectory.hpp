// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gnndt/env/sim.hpp"
#include "gnndt/graph/state_graph.hpp"
#include "gnndt/policy/policies.hpp"

namespace gnndt {

struct TrajectoryStep {
    StateGraph graph;               // state at the start of the step
    std::vector<double> action;     // raw policy output, one value per charger
    ActionMask mask;                // connectivity at the start of the step
    double reward = 0.0;
    RewardBreakdown breakdown;
    std::vector<double> applied_kw;  // powers the environment actually applied
    std::vector<Departure> departures;
    double price_charge = 0.0;
    double price_discharge = 0.0;
    double power_setpoint = 0.0;
};

struct Trajectory {
    std::string scenario_digest;
    std::shared_ptr<const Scenario> scenario;  // kept so stored actions can be replayed
    PolicyTag policy_tag = PolicyTag::random;
    double gamma = 1.0;
    double dt_hours = 0.25;
    std::vector<TrajectoryStep> steps;
    std::vector<double> rtg;

    int length() const { return static_cast<int>(steps.size()); }
    double episode_reward() const;
    std::vector<double> rewards() const;
};

struct DatasetMeta {
    std::size_t count = 0;
    double avg_reward = 0.0;
    double std_reward = 0.0;
    double gamma = 1.0;
    std::map<std::string, double> source_mix;
};

DatasetMeta summarize(const std::vector<Trajectory>& trajectories);

struct Dataset {
    std::vector<Trajectory> trajectories;
    DatasetMeta meta;

    /// Recomputes count, mean/std episode reward and tag fractions from the trajectories.
    void refresh_meta();
    std::size_t size() const { return trajectories.size(); }
};

/// Backward recursion G_t = r_t + gamma G_{t+1}, G_{T-1} = r_{T-1}. Throws ConfigError on empty input
/// or gamma outside (0, 1].
std::vector<double> compute_rtg(std::span<const double> rewards, double gamma);

/// Empty trajectory bound to `scenario`; fill it with `append_step`, then `finish_trajectory`.
Trajectory begin_trajectory(std::shared_ptr<const Scenario> scenario, PolicyTag tag, double gamma = 1.0);
/// Applies `action` in `state` (whose state graph is `graph`), records the transition, returns the outcome.
StepOutcome append_step(Trajectory& trajectory, const SimState& state, std::vector<double> action, StateGraph graph);
/// Fills in the returns-to-go.
void finish_trajectory(Trajectory& trajectory);

/// Full rollout of `policy` through the environment with returns-to-go filled in.
Trajectory record_trajectory(Policy& policy, std::shared_ptr<const Scenario> scenario, double gamma = 1.0);

/// Replays the stored actions through the stored scenario and returns the per-step rewards.
std::vector<double> replay_rewards(const Trajectory& trajectory);

/// Draws round(frac_a * total) trajectories from `a` and the rest from `b` without replacement, then
/// shuffles. Throws ConfigError if either source is too small or frac_a is outside [0, 1].
Dataset mix_datasets(const Dataset& a, const Dataset& b, double frac_a, std::size_t total, std::uint64_t seed);

/// One token position of a training window. `prev` is the step whose action feeds the action token
/// (null at the episode start and on padding).
struct WindowPosition {
    const TrajectoryStep* step = nullptr;
    const TrajectoryStep* prev = nullptr;
    double rtg = 0.0;
    int timestep = 0;
    bool pad = true;
};

struct Window {
    int trajectory = 0;
    int end_step = 0;
    std::vector<WindowPosition> positions;  // K entries, oldest first, left-padded
    int padded() const;
};

/// Window of length K ending at `end_step` (inclusive) of trajectory `index`.
Window make_window(const Dataset& dataset, int index, int end_step, int K);

/// `batch` windows with (trajectory, end step) uniform over all stored steps.
/// Throws ConfigError when K < 1 or K exceeds the shortest trajectory.
std::vector<Window> sample_window(const Dataset& dataset, int K, int batch, std::mt19937_64& rng);

inline constexpr int kDatasetFormatVersion = 1;

/// JSON lines: header line, then one trajectory per line. Paths ending in ".gz" are gzip-compressed;
/// reading accepts either.
void save_dataset(const Dataset& dataset, const std::string& path);
Dataset load_dataset(const std::string& path);

nlohmann::json to_json(const Trajectory& trajectory);
Trajectory trajectory_from_json(const nlohmann::json& j);

}  // namespace gnndt
