// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gnndt/eval/report.hpp"
#include "gnndt/train/trainer.hpp"

namespace gnndt::eval {

enum class ExperimentKind { gen_data, train, eval, ablate, k_sweep, mix_sweep, generalize, scale };

std::string to_string(ExperimentKind kind);
ExperimentKind parse_experiment_kind(const std::string& name);

/// Offline dataset recipe: `count` episodes from scenario seeds `seed_base + k`.
struct DataSpec {
    ScenarioConfig scenario;
    PolicyTag source = PolicyTag::optimal;
    int count = 200;
    std::uint64_t seed_base = 0;
    std::uint64_t oracle_nodes = 200000;  // search budget per episode, optimal source only
    double gamma = 1.0;
};

/// Records the episodes in parallel; the result does not depend on the thread count.
Dataset generate_dataset(const DataSpec& spec);

struct ExperimentSpec {
    ExperimentKind kind = ExperimentKind::train;
    ScenarioConfig scenario;  // evaluation family (and training family for gen_data)
    DataSpec data;
    model::ModelConfig model;
    train::TrainConfig train;
    std::string dataset;         // oracle (or primary) dataset
    std::string random_dataset;  // mix_sweep second source
    std::string checkpoint;      // eval
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    std::vector<int> k_values{2, 5, 10, 20};
    std::vector<double> mix_fractions{0.0, 0.25, 0.5, 0.75, 1.0};
    std::size_t mix_total = 1000;
    std::vector<int> charger_counts{1, 6, 10};
    std::vector<GeneralizationShift> shifts{GeneralizationShift::none, GeneralizationShift::small,
                                            GeneralizationShift::medium, GeneralizationShift::extreme};
    int test_scenarios = 20;
    std::uint64_t test_seed_base = 2000000;
    bool double_precision = false;
    std::string out = "out";

    /// Throws ConfigError on invalid values or referenced files that do not exist.
    void validate() const;
};

/// Relative paths are resolved against `base_dir`.
ExperimentSpec experiment_spec_from_json(const nlohmann::json& j, const std::string& base_dir = ".");
nlohmann::json to_json(const ExperimentSpec& spec);

/// Model rows of the ablation grid, from the flat baseline to the full model.
struct AblationRow {
    std::string label;
    model::ModelConfig config;
};
std::vector<AblationRow> ablation_rows(const model::ModelConfig& base, int num_chargers, int num_groups);

/// Test scenarios drawn from `count` seeds at `seed_base`, targets per `train`'s mode.
train::EvalSet make_test_set(const ScenarioConfig& config, const train::TrainConfig& train, const Dataset& dataset,
                             int count, std::uint64_t seed_base);

using PolicyFactory = std::function<std::unique_ptr<Policy>(std::uint64_t scenario_seed)>;

/// Runs a baseline through each scenario, timing only the policy's decisions.
std::vector<train::EpisodeResult> rollout_policy(const PolicyFactory& make, const train::EvalSet& set);
/// Plans each scenario with the search oracle under a node budget, timing the search.
std::vector<train::EpisodeResult> rollout_oracle(const train::EvalSet& set, std::uint64_t node_budget);

struct TrialOutcome {
    train::TrainReport report;
    std::vector<train::EpisodeResult> test;
    double test_reward = 0.0;
};

/// Trains with validation on `val` (best-by-eval) and scores the kept parameters on `test`.
TrialOutcome run_trial(const model::ModelConfig& model, const train::TrainConfig& train, const Dataset& data,
                       const train::EvalSet& val, const train::EvalSet& test, bool double_precision = false,
                       const std::string& out_dir = "");

/// Executes `spec`, writing its artifacts under `spec.out`. Grid cells run on up to `threads` workers.
/// Progress lines go to `log`.
void run_experiment(const ExperimentSpec& spec, int threads, std::ostream& log);

}  // namespace gnndt::eval
