// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "gnndt/data/trajectory.hpp"
#include "gnndt/eval/metrics.hpp"
#include "gnndt/model/gnn_dt.hpp"

namespace gnndt::train {

/// Where the initial return-to-go of an evaluation episode comes from.
enum class TargetRtgMode { oracle_estimate, dataset_best, fixed };
/// How the conditioning return evolves within an episode: subtract observed rewards, or feed zero at the
/// current step.
enum class RtgUpdate { decrement, zero_current };

std::string to_string(TargetRtgMode mode);
TargetRtgMode parse_target_rtg_mode(const std::string& name);
std::string to_string(RtgUpdate update);
RtgUpdate parse_rtg_update(const std::string& name);

struct TrainConfig {
    int batch_size = 128;
    int steps_per_epoch = 1000;
    int epochs = 250;
    double lr = 1e-4;
    double weight_decay = 1e-4;
    int warmup_steps = 1000;
    std::uint64_t seed = 0;
    int eval_every = 1;      // epochs
    int eval_scenarios = 50;
    std::uint64_t eval_seed_base = 1000000;  // disjoint from data-generation seeds
    TargetRtgMode target_rtg_mode = TargetRtgMode::oracle_estimate;
    RtgUpdate rtg_update = RtgUpdate::decrement;
    double fixed_target_rtg = 0.0;
    std::uint64_t oracle_nodes = 200000;  // search budget per evaluation scenario, for oracle_estimate

    void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EvalPoint {
    int epoch = 0;
    double mean = 0.0;
    double std = 0.0;
};

struct TrainReport {
    std::vector<double> loss;  // one entry per optimizer step
    std::vector<EvalPoint> eval;
    double wall_s = 0.0;
    std::string best_checkpoint = "init";
    double best_eval = 0.0;
};

void write_loss_csv(const TrainReport& report, const std::string& path);
void write_eval_csv(const TrainReport& report, const std::string& path);

/// Held-out evaluation episodes with their initial conditioning returns.
struct EvalSet {
    std::vector<std::shared_ptr<const Scenario>> scenarios;
    std::vector<std::uint64_t> seeds;
    std::vector<double> targets;
};

/// Scenarios from seeds `seed_base + k` of `config`, targets chosen per `train`'s mode.
EvalSet make_eval_set(const ScenarioConfig& config, const TrainConfig& train, const Dataset& dataset);

struct EpisodeResult {
    Trajectory trajectory;
    eval::Metrics metrics;
};

/// Runs the frozen model through every scenario in lockstep (one batched forward per step) with a sliding
/// K-step context; predictions are clipped to [-1, 1] and masked by the environment.
template <class T>
std::vector<EpisodeResult> rollout_eval(model::GnnDt<T>& model, const EvalSet& set, RtgUpdate update);

template <class T>
struct TrainResult {
    TrainReport report;
    std::unique_ptr<model::GnnDt<T>> model;  // best-by-eval parameters
};

/// Supervised training on sampled windows with AdamW and warmup. Evaluates on `eval_set` every
/// `eval_every` epochs and keeps the best parameters. With a non-empty `out_dir`, writes
/// init.ckpt, best.ckpt, loss.csv and eval.csv there. Throws RuntimeFailure on a non-finite loss.
template <class T>
TrainResult<T> train(const model::ModelConfig& model_config, const TrainConfig& config, const Dataset& dataset,
                     const EvalSet& eval_set, const std::string& out_dir = "");

double mean_reward(const std::vector<EpisodeResult>& results);

}  // namespace gnndt::train
