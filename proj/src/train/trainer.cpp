// SPDX-License-Identifier: Apache-2.0
#include "gnndt/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "gnndt/ad/checkpoint.hpp"
#include "gnndt/ad/optim.hpp"
#include "gnndt/error.hpp"
#include "gnndt/policy/oracle.hpp"

namespace gnndt::train {

using model::GnnDt;
using model::ModelBatch;
using model::StepInput;

std::string to_string(TargetRtgMode mode) {
    switch (mode) {
        case TargetRtgMode::oracle_estimate: return "oracle_estimate";
        case TargetRtgMode::dataset_best: return "dataset_best";
        case TargetRtgMode::fixed: return "fixed";
    }
    return "?";
}

TargetRtgMode parse_target_rtg_mode(const std::string& name) {
    for (auto m : {TargetRtgMode::oracle_estimate, TargetRtgMode::dataset_best, TargetRtgMode::fixed})
        if (to_string(m) == name) return m;
    throw ConfigError("unknown target_rtg_mode '" + name + "'");
}

std::string to_string(RtgUpdate update) { return update == RtgUpdate::decrement ? "decrement" : "zero_current"; }

RtgUpdate parse_rtg_update(const std::string& name) {
    if (name == "decrement") return RtgUpdate::decrement;
    if (name == "zero_current") return RtgUpdate::zero_current;
    throw ConfigError("unknown rtg_update '" + name + "'");
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (steps_per_epoch < 1) throw ConfigError("train: steps_per_epoch must be >= 1");
    if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
    if (eval_every < 1) throw ConfigError("train: eval_every must be >= 1");
    if (eval_scenarios < 0) throw ConfigError("train: eval_scenarios must be >= 0");
    if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
    if (!(weight_decay >= 0.0)) throw ConfigError("train: weight_decay must be >= 0");
    if (warmup_steps < 0) throw ConfigError("train: warmup_steps must be >= 0");
    if (oracle_nodes < 1) throw ConfigError("train: oracle_nodes must be >= 1");
    if (!std::isfinite(fixed_target_rtg)) throw ConfigError("train: fixed_target_rtg must be finite");
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"batch_size", c.batch_size},
            {"steps_per_epoch", c.steps_per_epoch},
            {"epochs", c.epochs},
            {"lr", c.lr},
            {"weight_decay", c.weight_decay},
            {"warmup_steps", c.warmup_steps},
            {"seed", c.seed},
            {"eval_every", c.eval_every},
            {"eval_scenarios", c.eval_scenarios},
            {"eval_seed_base", c.eval_seed_base},
            {"target_rtg_mode", to_string(c.target_rtg_mode)},
            {"rtg_update", to_string(c.rtg_update)},
            {"fixed_target_rtg", c.fixed_target_rtg},
            {"oracle_nodes", c.oracle_nodes}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    try {
        c.batch_size = j.value("batch_size", c.batch_size);
        c.steps_per_epoch = j.value("steps_per_epoch", c.steps_per_epoch);
        c.epochs = j.value("epochs", c.epochs);
        c.lr = j.value("lr", c.lr);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
        c.seed = j.value("seed", c.seed);
        c.eval_every = j.value("eval_every", c.eval_every);
        c.eval_scenarios = j.value("eval_scenarios", c.eval_scenarios);
        c.eval_seed_base = j.value("eval_seed_base", c.eval_seed_base);
        c.target_rtg_mode = parse_target_rtg_mode(j.value("target_rtg_mode", to_string(c.target_rtg_mode)));
        c.rtg_update = parse_rtg_update(j.value("rtg_update", to_string(c.rtg_update)));
        c.fixed_target_rtg = j.value("fixed_target_rtg", c.fixed_target_rtg);
        c.oracle_nodes = j.value("oracle_nodes", c.oracle_nodes);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

void write_loss_csv(const TrainReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw RuntimeFailure("cannot write " + path);
    out.precision(10);
    out << "step,loss\n";
    for (std::size_t k = 0; k < report.loss.size(); ++k) out << k + 1 << ',' << report.loss[k] << '\n';
}

void write_eval_csv(const TrainReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw RuntimeFailure("cannot write " + path);
    out.precision(10);
    out << "epoch,eval_mean,eval_std\n";
    for (const auto& e : report.eval) out << e.epoch << ',' << e.mean << ',' << e.std << '\n';
}

EvalSet make_eval_set(const ScenarioConfig& config, const TrainConfig& train, const Dataset& dataset) {
    train.validate();
    std::vector<std::string> seen;
    for (const auto& t : dataset.trajectories) seen.push_back(t.scenario_digest);
    std::sort(seen.begin(), seen.end());
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& t : dataset.trajectories) best = std::max(best, t.episode_reward());

    EvalSet set;
    for (int k = 0; k < train.eval_scenarios; ++k) {
        const std::uint64_t seed = train.eval_seed_base + static_cast<std::uint64_t>(k);
        auto sc = std::make_shared<const Scenario>(generate_scenario(config, seed));
        if (std::binary_search(seen.begin(), seen.end(), scenario_digest(*sc)))
            throw ConfigError("evaluation seed " + std::to_string(seed) + " reproduces a training scenario");
        double target = train.fixed_target_rtg;
        if (train.target_rtg_mode == TargetRtgMode::oracle_estimate) {
            OracleOptions opt;
            opt.time_budget_s = std::numeric_limits<double>::infinity();
            opt.node_budget = train.oracle_nodes;
            target = oracle_solve(*sc, DiscretizationSpec{}, OracleMode::branch_and_bound, opt).objective;
        } else if (train.target_rtg_mode == TargetRtgMode::dataset_best) {
            if (dataset.trajectories.empty()) throw ConfigError("dataset_best target needs a non-empty dataset");
            target = best;
        }
        set.scenarios.push_back(std::move(sc));
        set.seeds.push_back(seed);
        set.targets.push_back(target);
    }
    return set;
}

double mean_reward(const std::vector<EpisodeResult>& results) {
    if (results.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : results) s += r.metrics.reward;
    return s / static_cast<double>(results.size());
}

template <class T>
std::vector<EpisodeResult> rollout_eval(GnnDt<T>& model, const EvalSet& set, RtgUpdate update) {
    const int S = static_cast<int>(set.scenarios.size());
    if (set.targets.size() != set.scenarios.size()) throw ConfigError("eval set needs one target per scenario");
    const int K = model.config().context_K;
    struct Run {
        SimState state;
        std::vector<StateGraph> graphs;
        std::vector<std::vector<double>> actions;
        std::vector<double> rtg;
        double target = 0.0;
        double infer_s = 0.0;
        Trajectory tr;
    };
    std::vector<Run> runs(S);
    int horizon = 0;
    for (int s = 0; s < S; ++s) {
        const auto& sc = set.scenarios[s];
        runs[s].state = initial_state(*sc);
        runs[s].target = set.targets[s];
        runs[s].tr = begin_trajectory(sc, PolicyTag::model);
        runs[s].graphs.reserve(sc->horizon());
        horizon = std::max(horizon, sc->horizon());
    }
    for (int t = 0; t < horizon; ++t) {
        std::vector<int> active;
        for (int s = 0; s < S; ++s) {
            if (t >= set.scenarios[s]->horizon()) continue;
            active.push_back(s);
            runs[s].graphs.push_back(build_state_graph(runs[s].state, *set.scenarios[s]));
            runs[s].rtg.push_back(runs[s].target);
        }
        if (active.empty()) break;
        ModelBatch mb;
        mb.batch = static_cast<int>(active.size());
        mb.K = K;
        for (int s : active) {
            const Run& r = runs[s];
            for (int k = 0; k < K; ++k) {
                const int at = t - (K - 1) + k;
                StepInput in;
                if (at >= 0) {
                    in.state = &r.graphs[at];
                    if (at > 0) {
                        in.prev_state = &r.graphs[at - 1];
                        in.prev_action = &r.actions[at - 1];
                    }
                    in.rtg = (update == RtgUpdate::zero_current && at == t) ? 0.0 : r.rtg[at];
                    in.timestep = at;
                    in.pad = false;
                }
                mb.steps.push_back(in);
            }
        }
        const auto t0 = std::chrono::steady_clock::now();
        ad::Tape<T> tape(false);
        const auto out = model.forward(tape, mb);
        const auto acts = model.actions_at(mb, out, K - 1);
        const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        for (std::size_t b = 0; b < active.size(); ++b) {
            Run& r = runs[active[b]];
            r.infer_s += dt / static_cast<double>(active.size());
            r.actions.push_back(acts[b]);
            StepOutcome o = append_step(r.tr, r.state, acts[b], r.graphs.back());
            r.target -= o.reward.total;
            r.state = std::move(o.next);
        }
    }
    std::vector<EpisodeResult> results;
    results.reserve(S);
    for (auto& r : runs) {
        finish_trajectory(r.tr);
        EpisodeResult e;
        e.metrics = eval::compute_metrics(r.tr);
        e.metrics.exec_s_per_step = r.tr.steps.empty() ? 0.0 : r.infer_s / static_cast<double>(r.tr.steps.size());
        e.trajectory = std::move(r.tr);
        results.push_back(std::move(e));
    }
    return results;
}

namespace {

std::string batch_digest(const std::vector<Window>& windows) {
    std::string key;
    for (const auto& w : windows) key += std::to_string(w.trajectory) + ":" + std::to_string(w.end_step) + ";";
    return fnv1a_hex(key);
}

template <class T>
std::vector<ad::Matrix<T>> snapshot(const ad::ParameterStore<T>& ps) {
    std::vector<ad::Matrix<T>> v;
    for (const auto* p : ps.all()) v.push_back(p->value);
    return v;
}

template <class T>
void restore(ad::ParameterStore<T>& ps, const std::vector<ad::Matrix<T>>& values) {
    auto all = ps.all();
    for (std::size_t k = 0; k < all.size(); ++k) all[k]->value = values[k];
}

}  // namespace

template <class T>
TrainResult<T> train(const model::ModelConfig& model_config, const TrainConfig& config, const Dataset& dataset,
                     const EvalSet& eval_set, const std::string& out_dir) {
    config.validate();
    model_config.validate();
    if (dataset.trajectories.empty()) throw ConfigError("cannot train on an empty dataset");
    const auto start = std::chrono::steady_clock::now();

    TrainResult<T> result;
    result.model = std::make_unique<GnnDt<T>>(model_config, config.seed);
    GnnDt<T>& m = *result.model;
    ad::AdamWConfig oc;
    oc.lr = config.lr;
    oc.weight_decay = config.weight_decay;
    oc.warmup_steps = config.warmup_steps;
    ad::AdamW<T> opt(m.params(), oc);
    std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

    nlohmann::json sidecar = {{"model", model::to_json(model_config)}, {"train", to_json(config)}, {"epoch", 0}};
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        ad::save_checkpoint<T>(out_dir + "/init.ckpt", m.params(), nullptr, sidecar);
    }

    TrainReport& report = result.report;
    report.best_eval = -std::numeric_limits<double>::infinity();
    std::vector<ad::Matrix<T>> best;
    const int K = model_config.context_K;
    std::int64_t step = 0;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        for (int s = 0; s < config.steps_per_epoch; ++s, ++step) {
            const auto windows = sample_window(dataset, K, config.batch_size, rng);
            const auto mb = model::make_batch(windows);
            m.params().zero_grad();
            ad::Tape<T> tape;
            const auto out = m.forward(tape, mb);
            const auto loss = m.loss(tape, mb, out);
            const double v = static_cast<double>(loss.item());
            if (!std::isfinite(v))
                throw RuntimeFailure("non-finite loss at step " + std::to_string(step + 1) + " (epoch " +
                                     std::to_string(epoch) + ", batch digest " + batch_digest(windows) + ")");
            tape.backward(loss);
            opt.step();
            report.loss.push_back(v);
        }
        const bool due = epoch % config.eval_every == 0 || epoch == config.epochs;
        if (!eval_set.scenarios.empty() && due) {
            const auto results = rollout_eval(m, eval_set, config.rtg_update);
            EvalPoint p{epoch, mean_reward(results), 0.0};
            if (results.size() > 1) {
                double ss = 0.0;
                for (const auto& r : results) ss += (r.metrics.reward - p.mean) * (r.metrics.reward - p.mean);
                p.std = std::sqrt(ss / static_cast<double>(results.size() - 1));
            }
            report.eval.push_back(p);
            if (p.mean > report.best_eval) {
                report.best_eval = p.mean;
                report.best_checkpoint = "epoch_" + std::to_string(epoch);
                best = snapshot(m.params());
                if (!out_dir.empty()) {
                    sidecar["epoch"] = epoch;
                    ad::save_checkpoint<T>(out_dir + "/best.ckpt", m.params(), nullptr, sidecar);
                }
            }
        }
    }
    if (!best.empty()) {
        restore(m.params(), best);
    } else if (config.epochs > 0) {
        report.best_checkpoint = "final";
        report.best_eval = 0.0;
        if (!out_dir.empty()) {
            sidecar["epoch"] = config.epochs;
            ad::save_checkpoint<T>(out_dir + "/best.ckpt", m.params(), nullptr, sidecar);
        }
    } else {
        report.best_eval = 0.0;
    }
    report.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!out_dir.empty()) {
        write_loss_csv(report, out_dir + "/loss.csv");
        write_eval_csv(report, out_dir + "/eval.csv");
    }
    return result;
}

template std::vector<EpisodeResult> rollout_eval<float>(GnnDt<float>&, const EvalSet&, RtgUpdate);
template std::vector<EpisodeResult> rollout_eval<double>(GnnDt<double>&, const EvalSet&, RtgUpdate);
template TrainResult<float> train<float>(const model::ModelConfig&, const TrainConfig&, const Dataset&, const EvalSet&,
                                         const std::string&);
template TrainResult<double> train<double>(const model::ModelConfig&, const TrainConfig&, const Dataset&,
                                           const EvalSet&, const std::string&);

}  // namespace gnndt::train
