// SPDX-License-Identifier: Apache-2.0
#include "gnndt/eval/experiments.hpp"

#include <omp.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

#include "gnndt/ad/checkpoint.hpp"
#include "gnndt/error.hpp"
#include "gnndt/policy/oracle.hpp"

namespace gnndt::eval {

namespace fs = std::filesystem;
using model::GnnDt;
using model::ModelConfig;
using train::EpisodeResult;
using train::EvalSet;
using train::TrainConfig;

namespace {

constexpr ExperimentKind kKinds[] = {ExperimentKind::gen_data,  ExperimentKind::train,      ExperimentKind::eval,
                                     ExperimentKind::ablate,    ExperimentKind::k_sweep,    ExperimentKind::mix_sweep,
                                     ExperimentKind::generalize, ExperimentKind::scale};

}  // namespace

std::string to_string(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::gen_data: return "gen_data";
        case ExperimentKind::train: return "train";
        case ExperimentKind::eval: return "eval";
        case ExperimentKind::ablate: return "ablate";
        case ExperimentKind::k_sweep: return "k_sweep";
        case ExperimentKind::mix_sweep: return "mix_sweep";
        case ExperimentKind::generalize: return "generalize";
        case ExperimentKind::scale: return "scale";
    }
    return "?";
}

ExperimentKind parse_experiment_kind(const std::string& name) {
    for (auto k : kKinds)
        if (to_string(k) == name) return k;
    throw ConfigError("unknown experiment kind '" + name + "'");
}

Dataset generate_dataset(const DataSpec& spec) {
    spec.scenario.validate();
    if (spec.count < 1) throw ConfigError("data: count must be >= 1");
    if (spec.source == PolicyTag::model) throw ConfigError("data: the model is not a behavior policy");
    Dataset d;
    d.trajectories.resize(spec.count);
    std::vector<std::string> errors(spec.count);
#pragma omp parallel for schedule(dynamic)
    for (int k = 0; k < spec.count; ++k) {
        try {
            const std::uint64_t seed = spec.seed_base + static_cast<std::uint64_t>(k);
            auto sc = std::make_shared<const Scenario>(generate_scenario(spec.scenario, seed));
            std::unique_ptr<Policy> p;
            switch (spec.source) {
                case PolicyTag::random: p = std::make_unique<RandomPolicy>(seed * 0x2545F4914F6CDD1DULL + 1); break;
                case PolicyTag::bau: p = std::make_unique<BauPolicy>(); break;
                case PolicyTag::cafap: p = std::make_unique<CafapPolicy>(); break;
                default: {
                    OracleOptions opt;
                    opt.time_budget_s = std::numeric_limits<double>::infinity();
                    opt.node_budget = spec.oracle_nodes;
                    auto sol = oracle_solve(*sc, DiscretizationSpec{}, OracleMode::branch_and_bound, opt);
                    p = std::make_unique<PlanPolicy>(std::move(sol.actions), PolicyTag::optimal);
                }
            }
            d.trajectories[k] = record_trajectory(*p, sc, spec.gamma);
        } catch (const std::exception& e) {
            errors[k] = e.what();
        }
    }
    for (const auto& e : errors)
        if (!e.empty()) throw RuntimeFailure("data generation: " + e);
    d.refresh_meta();
    return d;
}

void ExperimentSpec::validate() const {
    scenario.validate();
    const bool trains = kind != ExperimentKind::gen_data && kind != ExperimentKind::eval;
    auto need = [](const std::string& path, const char* what) {
        if (path.empty()) throw ConfigError(std::string("experiment needs '") + what + "'");
        if (!fs::exists(path)) throw ConfigError(std::string(what) + " not found: " + path);
    };
    if (kind == ExperimentKind::gen_data) {
        data.scenario.validate();
        if (data.count < 1) throw ConfigError("data.count must be >= 1");
        return;
    }
    if (test_scenarios < 1) throw ConfigError("test_scenarios must be >= 1");
    if (kind == ExperimentKind::eval) {
        need(checkpoint, "checkpoint");
    } else {
        need(dataset, "dataset");
        model.validate();
        train.validate();
    }
    if (kind == ExperimentKind::mix_sweep) need(random_dataset, "random_dataset");
    if (trains && seeds.empty()) throw ConfigError("seeds must not be empty");
    for (int k : k_values)
        if (k < 1) throw ConfigError("k_values must be >= 1");
    for (double f : mix_fractions)
        if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("mix_fractions must lie in [0, 1]");
    if (kind == ExperimentKind::mix_sweep && mix_total < 1) throw ConfigError("mix_total must be >= 1");
    for (int n : charger_counts)
        if (n < 1) throw ConfigError("charger_counts must be >= 1");
    if (kind == ExperimentKind::scale && model.size_locked())
        throw ConfigError("scale grid needs a model that is not tied to a charger count");
    if (trains && model.max_episode_steps < scenario.horizon)
        throw ConfigError("model.max_episode_steps is shorter than the scenario horizon");
    const auto val_end = train.eval_seed_base + static_cast<std::uint64_t>(train.eval_scenarios);
    const auto test_end = test_seed_base + static_cast<std::uint64_t>(test_scenarios);
    if (trains && train.eval_scenarios > 0 && train.eval_seed_base < test_end && test_seed_base < val_end)
        throw ConfigError("validation and test seed ranges overlap");
}

namespace {

std::string resolve(const std::string& path, const std::string& base) {
    if (path.empty() || fs::path(path).is_absolute()) return path;
    return (fs::path(base) / path).lexically_normal().string();
}

template <class V>
V get_list(const nlohmann::json& j, const char* key, V fallback) {
    return j.contains(key) ? j.at(key).get<V>() : fallback;
}

}  // namespace

ExperimentSpec experiment_spec_from_json(const nlohmann::json& j, const std::string& base_dir) {
    ExperimentSpec s;
    try {
        if (!j.is_object()) throw ConfigError("experiment spec must be a JSON object");
        s.kind = parse_experiment_kind(j.at("kind").get<std::string>());
        if (j.contains("scenario")) s.scenario = scenario_config_from_json(j.at("scenario"));
        s.data.scenario = s.scenario;
        if (j.contains("data")) {
            const auto& d = j.at("data");
            if (d.contains("scenario")) s.data.scenario = scenario_config_from_json(d.at("scenario"));
            s.data.source = parse_policy_tag(d.value("source", to_string(s.data.source)));
            s.data.count = d.value("count", s.data.count);
            s.data.seed_base = d.value("seed_base", s.data.seed_base);
            s.data.oracle_nodes = d.value("oracle_nodes", s.data.oracle_nodes);
            s.data.gamma = d.value("gamma", s.data.gamma);
        }
        if (j.contains("model")) s.model = model::model_config_from_json(j.at("model"));
        if (j.contains("train")) s.train = train::train_config_from_json(j.at("train"));
        s.dataset = resolve(j.value("dataset", std::string()), base_dir);
        s.random_dataset = resolve(j.value("random_dataset", std::string()), base_dir);
        s.checkpoint = resolve(j.value("checkpoint", std::string()), base_dir);
        s.seeds = get_list(j, "seeds", s.seeds);
        s.k_values = get_list(j, "k_values", s.k_values);
        s.mix_fractions = get_list(j, "mix_fractions", s.mix_fractions);
        s.mix_total = j.value("mix_total", s.mix_total);
        s.charger_counts = get_list(j, "charger_counts", s.charger_counts);
        if (j.contains("shifts")) {
            s.shifts.clear();
            for (const auto& n : j.at("shifts")) s.shifts.push_back(parse_shift(n.get<std::string>()));
        }
        s.test_scenarios = j.value("test_scenarios", s.test_scenarios);
        s.test_seed_base = j.value("test_seed_base", s.test_seed_base);
        s.double_precision = j.value("double_precision", s.double_precision);
        s.out = resolve(j.value("out", s.out), base_dir);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("experiment spec: ") + e.what());
    }
    return s;
}

nlohmann::json to_json(const ExperimentSpec& s) {
    nlohmann::json shifts = nlohmann::json::array();
    for (auto sh : s.shifts) shifts.push_back(to_string(sh));
    return {{"kind", to_string(s.kind)},
            {"scenario", to_json(s.scenario)},
            {"data",
             {{"scenario", to_json(s.data.scenario)},
              {"source", to_string(s.data.source)},
              {"count", s.data.count},
              {"seed_base", s.data.seed_base},
              {"oracle_nodes", s.data.oracle_nodes},
              {"gamma", s.data.gamma}}},
            {"model", model::to_json(s.model)},
            {"train", train::to_json(s.train)},
            {"dataset", s.dataset},
            {"random_dataset", s.random_dataset},
            {"checkpoint", s.checkpoint},
            {"seeds", s.seeds},
            {"k_values", s.k_values},
            {"mix_fractions", s.mix_fractions},
            {"mix_total", s.mix_total},
            {"charger_counts", s.charger_counts},
            {"shifts", shifts},
            {"test_scenarios", s.test_scenarios},
            {"test_seed_base", s.test_seed_base},
            {"double_precision", s.double_precision},
            {"out", s.out}};
}

std::vector<AblationRow> ablation_rows(const ModelConfig& base, int num_chargers, int num_groups) {
    std::vector<AblationRow> rows;
    ModelConfig c = model::flat_dt_config(base, num_chargers, num_groups);
    rows.push_back({"flat DT", c});
    c.state_embedder = model::EmbedderKind::gnn;
    rows.push_back({"+state GNN", c});
    c.use_residual_decode = true;
    rows.push_back({"+residual", c});
    c.action_embedder = model::EmbedderKind::gnn;
    c.num_chargers = 0;
    c.num_groups = 1;
    rows.push_back({"+action GNN", c});
    c.use_action_mask_loss = true;
    rows.push_back({"+mask", c});
    return rows;
}

EvalSet make_test_set(const ScenarioConfig& config, const TrainConfig& train, const Dataset& dataset, int count,
                      std::uint64_t seed_base) {
    TrainConfig t = train;
    t.eval_scenarios = count;
    t.eval_seed_base = seed_base;
    return train::make_eval_set(config, t, dataset);
}

std::vector<EpisodeResult> rollout_policy(const PolicyFactory& make, const EvalSet& set) {
    std::vector<EpisodeResult> out;
    for (std::size_t s = 0; s < set.scenarios.size(); ++s) {
        const auto& sc = set.scenarios[s];
        auto policy = make(set.seeds[s]);
        policy->reset(*sc);
        Trajectory tr = begin_trajectory(sc, policy->tag());
        SimState state = initial_state(*sc);
        double infer = 0.0;
        for (int t = 0; t < sc->horizon(); ++t) {
            const auto t0 = std::chrono::steady_clock::now();
            auto a = policy->act(*sc, state);
            infer += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            StepOutcome o = append_step(tr, state, std::move(a), build_state_graph(state, *sc));
            policy->observe(o);
            state = std::move(o.next);
        }
        finish_trajectory(tr);
        EpisodeResult r;
        r.metrics = compute_metrics(tr);
        r.metrics.exec_s_per_step = tr.steps.empty() ? 0.0 : infer / tr.length();
        r.trajectory = std::move(tr);
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<EpisodeResult> rollout_oracle(const EvalSet& set, std::uint64_t node_budget) {
    std::vector<EpisodeResult> out;
    for (const auto& sc : set.scenarios) {
        OracleOptions opt;
        opt.time_budget_s = std::numeric_limits<double>::infinity();
        opt.node_budget = node_budget;
        const auto t0 = std::chrono::steady_clock::now();
        auto sol = oracle_solve(*sc, DiscretizationSpec{}, OracleMode::branch_and_bound, opt);
        const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        PlanPolicy plan(std::move(sol.actions), PolicyTag::optimal);
        EpisodeResult r;
        r.trajectory = record_trajectory(plan, sc);
        r.metrics = compute_metrics(r.trajectory);
        r.metrics.exec_s_per_step = sc->horizon() > 0 ? dt / sc->horizon() : 0.0;
        out.push_back(std::move(r));
    }
    return out;
}

namespace {

/// Trained model in either precision.
struct AnyModel {
    std::unique_ptr<GnnDt<float>> f;
    std::unique_ptr<GnnDt<double>> d;

    std::vector<EpisodeResult> eval(const EvalSet& set, train::RtgUpdate update) const {
        return f ? train::rollout_eval(*f, set, update) : train::rollout_eval(*d, set, update);
    }
};

AnyModel train_any(const ModelConfig& model, const TrainConfig& train, const Dataset& data, const EvalSet& val,
                   bool double_precision, const std::string& out_dir, train::TrainReport& report) {
    AnyModel m;
    if (double_precision) {
        auto r = train::train<double>(model, train, data, val, out_dir);
        report = std::move(r.report);
        m.d = std::move(r.model);
    } else {
        auto r = train::train<float>(model, train, data, val, out_dir);
        report = std::move(r.report);
        m.f = std::move(r.model);
    }
    return m;
}

std::vector<MetricsRow> metric_rows(const std::string& algo, const EvalSet& set,
                                    const std::vector<EpisodeResult>& results) {
    std::vector<MetricsRow> rows;
    for (std::size_t k = 0; k < results.size(); ++k) rows.push_back({algo, set.seeds[k], results[k].metrics});
    return rows;
}

ScenarioConfig with_chargers(ScenarioConfig c, int n) {
    c.num_chargers = n;
    c.num_groups = std::min(c.num_groups, n);
    c.charger_group.clear();
    if (!c.charger_max_charge_kw.empty()) c.charger_max_charge_kw.assign(n, c.charger_max_charge_kw.front());
    if (!c.charger_max_discharge_kw.empty()) c.charger_max_discharge_kw.assign(n, c.charger_max_discharge_kw.front());
    if (!c.group_limits.empty()) c.group_limits.resize(c.num_groups);
    return c;
}

std::string seed_dir(const std::string& out, const std::string& cell, std::uint64_t seed) {
    std::string safe;
    for (char ch : cell) safe += std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' || ch == '-' ? ch : '_';
    return out + "/cells/" + safe + "/seed_" + std::to_string(seed);
}

using Task = std::function<std::vector<CellResult>()>;

/// Runs tasks on up to `threads` workers; results keep task order.
std::vector<CellResult> run_tasks(const std::vector<Task>& tasks, int threads) {
    std::vector<std::vector<CellResult>> results(tasks.size());
    std::vector<std::string> errors(tasks.size());
    const int workers = std::max(1, std::min<int>(threads, static_cast<int>(tasks.size())));
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        if (workers > 1) omp_set_num_threads(1);
        for (std::size_t k; (k = next++) < tasks.size();) {
            try {
                results[k] = tasks[k]();
            } catch (const ConfigError& e) {
                errors[k] = std::string("C") + e.what();
            } catch (const std::exception& e) {
                errors[k] = std::string("R") + e.what();
            }
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    }
    for (const auto& e : errors) {
        if (e.empty()) continue;
        if (e[0] == 'C') throw ConfigError(e.substr(1));
        throw RuntimeFailure(e.substr(1));
    }
    std::vector<CellResult> all;
    for (auto& r : results) all.insert(all.end(), r.begin(), r.end());
    return all;
}

class Runner {
public:
    Runner(const ExperimentSpec& spec, int threads, std::ostream& log) : s_(spec), threads_(threads), log_(log) {}

    void run() {
        fs::create_directories(s_.out);
        {
            std::ofstream f(s_.out + "/experiment.json", std::ios::trunc);
            f << to_json(s_).dump(2) << '\n';
        }
        switch (s_.kind) {
            case ExperimentKind::gen_data: return gen_data();
            case ExperimentKind::train: return train_one();
            case ExperimentKind::eval: return eval_checkpoint();
            case ExperimentKind::ablate: return ablate();
            case ExperimentKind::k_sweep: return k_sweep();
            case ExperimentKind::mix_sweep: return mix_sweep();
            case ExperimentKind::generalize: return generalize();
            case ExperimentKind::scale: return scale();
        }
    }

private:
    void say(const std::string& line) {
        std::lock_guard lock(mu_);
        log_ << line << std::endl;
    }

    void gen_data() {
        const auto d = generate_dataset(s_.data);
        save_dataset(d, s_.out + "/dataset.jsonl.gz");
        std::ofstream f(s_.out + "/dataset_meta.json", std::ios::trunc);
        f << nlohmann::json{{"count", d.meta.count},
                            {"avg_reward", d.meta.avg_reward},
                            {"std_reward", d.meta.std_reward},
                            {"source", to_string(s_.data.source)}}
                 .dump(2)
          << '\n';
        say("dataset: " + std::to_string(d.meta.count) + " episodes, mean reward " + std::to_string(d.meta.avg_reward));
    }

    void load_primary() {
        data_ = load_dataset(s_.dataset);
        say("loaded " + std::to_string(data_.size()) + " episodes from " + s_.dataset);
    }

    EvalSet val_set(const ScenarioConfig& c, const Dataset& d) const { return train::make_eval_set(c, s_.train, d); }
    EvalSet test_set(const ScenarioConfig& c, const Dataset& d) const {
        return make_test_set(c, s_.train, d, s_.test_scenarios, s_.test_seed_base);
    }

    std::vector<std::pair<std::string, std::vector<EpisodeResult>>> baselines(const EvalSet& set) const {
        return {{"bau", rollout_policy([](std::uint64_t) { return std::make_unique<BauPolicy>(); }, set)},
                {"cafap", rollout_policy([](std::uint64_t) { return std::make_unique<CafapPolicy>(); }, set)},
                {"random", rollout_policy([](std::uint64_t seed) { return std::make_unique<RandomPolicy>(seed); }, set)}};
    }

    // per-scenario rewards as cells, so the summary reports mean +/- std over scenarios
    static void add_scenario_cells(std::vector<CellResult>& cells, const std::string& grid, const std::string& algo,
                                   int order, const EvalSet& set, const std::vector<EpisodeResult>& results) {
        for (std::size_t k = 0; k < results.size(); ++k)
            cells.push_back({grid, algo, order, set.seeds[k], results[k].metrics.reward, false});
    }

    void train_one() {
        load_primary();
        const auto val = val_set(s_.scenario, data_);
        const auto test = test_set(s_.scenario, data_);
        train::TrainReport report;
        const auto m = train_any(s_.model, s_.train, data_, val, s_.double_precision, s_.out, report);
        const auto res = m.eval(test, s_.train.rtg_update);
        std::vector<MetricsRow> rows = metric_rows("gnn_dt", test, res);
        std::vector<CellResult> cells;
        add_scenario_cells(cells, "test", "gnn_dt", 0, test, res);
        int order = 1;
        for (const auto& [name, r] : baselines(test)) {
            auto more = metric_rows(name, test, r);
            rows.insert(rows.end(), more.begin(), more.end());
            add_scenario_cells(cells, "test", name, order++, test, r);
        }
        write_metrics_csv(s_.out + "/metrics.csv", rows);
        write_report(s_.out, cells);
        say("best " + report.best_checkpoint + " val " + std::to_string(report.best_eval) + ", test " +
            std::to_string(train::mean_reward(res)) + " in " + std::to_string(report.wall_s) + " s");
    }

    void eval_checkpoint() {
        const auto sidecar = ad::read_checkpoint_sidecar(s_.checkpoint);
        if (!sidecar.is_object() || !sidecar.contains("model"))
            throw ConfigError("checkpoint has no model config sidecar: " + s_.checkpoint);
        const auto mc = model::model_config_from_json(sidecar.at("model"));
        if (!s_.dataset.empty()) data_ = load_dataset(s_.dataset);
        const auto test = test_set(s_.scenario, data_);
        AnyModel m;
        if (s_.double_precision) {
            m.d = std::make_unique<GnnDt<double>>(mc, 0);
            ad::load_checkpoint<double>(s_.checkpoint, m.d->params(), nullptr);
        } else {
            m.f = std::make_unique<GnnDt<float>>(mc, 0);
            ad::load_checkpoint<float>(s_.checkpoint, m.f->params(), nullptr);
        }
        const auto res = m.eval(test, s_.train.rtg_update);
        std::vector<MetricsRow> rows = metric_rows("gnn_dt", test, res);
        std::vector<CellResult> cells;
        add_scenario_cells(cells, "eval", "gnn_dt", 0, test, res);
        auto all = baselines(test);
        all.emplace_back("oracle", rollout_oracle(test, s_.train.oracle_nodes));
        int order = 1;
        for (const auto& [name, r] : all) {
            auto more = metric_rows(name, test, r);
            rows.insert(rows.end(), more.begin(), more.end());
            add_scenario_cells(cells, "eval", name, order++, test, r);
        }
        write_metrics_csv(s_.out + "/metrics.csv", rows);
        write_report(s_.out, cells);
        say(summary_table(summarize(cells)));
    }

    // one training run per (cell, seed), scored on the shared test set
    Task trial_task(const std::string& grid, const std::string& cell, int order, std::uint64_t seed, ModelConfig mc,
                    std::shared_ptr<const Dataset> data, std::shared_ptr<const EvalSet> val,
                    std::shared_ptr<const EvalSet> test) {
        return [=, this] {
            TrainConfig tc = s_.train;
            tc.seed = seed;
            const auto dir = seed_dir(s_.out, cell, seed);
            const auto out = run_trial(mc, tc, *data, *val, *test, s_.double_precision, dir);
            say(grid + " | " + cell + " | seed " + std::to_string(seed) + " | test " + std::to_string(out.test_reward));
            return std::vector<CellResult>{{grid, cell, order, seed, out.test_reward, false}};
        };
    }

    template <class Cells>
    void run_grid(const std::string& grid, const Cells& cells, std::shared_ptr<const Dataset> data) {
        auto val = std::make_shared<const EvalSet>(val_set(s_.scenario, *data));
        auto test = std::make_shared<const EvalSet>(test_set(s_.scenario, *data));
        std::vector<Task> tasks;
        int order = 0;
        for (const auto& [label, mc] : cells) {
            for (auto seed : s_.seeds) tasks.push_back(trial_task(grid, label, order, seed, mc, data, val, test));
            ++order;
        }
        finish(run_tasks(tasks, threads_));
    }

    void finish(const std::vector<CellResult>& cells) {
        write_report(s_.out, cells);
        say(summary_table(summarize(cells)));
    }

    void ablate() {
        load_primary();
        std::vector<std::pair<std::string, ModelConfig>> cells;
        for (const auto& r : ablation_rows(s_.model, s_.scenario.num_chargers, s_.scenario.num_groups))
            cells.emplace_back(r.label, r.config);
        run_grid("ablation", cells, std::make_shared<const Dataset>(std::move(data_)));
    }

    void k_sweep() {
        load_primary();
        std::vector<std::pair<std::string, ModelConfig>> cells;
        for (int k : s_.k_values) {
            ModelConfig mc = s_.model;
            mc.context_K = k;
            cells.emplace_back("K=" + std::to_string(k), mc);
        }
        run_grid("k_sweep", cells, std::make_shared<const Dataset>(std::move(data_)));
    }

    void mix_sweep() {
        load_primary();
        const Dataset random = load_dataset(s_.random_dataset);
        auto val = std::make_shared<const EvalSet>(val_set(s_.scenario, data_));
        auto test = std::make_shared<const EvalSet>(test_set(s_.scenario, data_));
        std::vector<Task> tasks;
        int order = 0;
        for (double f : s_.mix_fractions) {
            char label[48];
            std::snprintf(label, sizeof(label), "oracle=%g%%", 100.0 * f);
            for (auto seed : s_.seeds) {
                auto mixed = std::make_shared<const Dataset>(mix_datasets(data_, random, f, s_.mix_total, seed));
                tasks.push_back(trial_task("mix_sweep", label, order, seed, s_.model, mixed, val, test));
            }
            ++order;
        }
        finish(run_tasks(tasks, threads_));
    }

    // train once per seed, score on several scenario families
    void train_then_score(const std::string& grid, const std::vector<std::pair<std::string, ScenarioConfig>>& families) {
        load_primary();
        const auto val = val_set(s_.scenario, data_);
        std::vector<std::shared_ptr<const EvalSet>> tests;
        for (const auto& [name, cfg] : families) tests.push_back(std::make_shared<const EvalSet>(test_set(cfg, data_)));

        std::vector<Task> tasks;
        for (auto seed : s_.seeds) {
            tasks.push_back([&, seed] {
                TrainConfig tc = s_.train;
                tc.seed = seed;
                train::TrainReport report;
                const auto m = train_any(s_.model, tc, data_, val, s_.double_precision,
                                         seed_dir(s_.out, "model", seed), report);
                std::vector<CellResult> cells;
                for (std::size_t f = 0; f < families.size(); ++f) {
                    const double r = train::mean_reward(m.eval(*tests[f], s_.train.rtg_update));
                    cells.push_back({grid, "gnn_dt@" + families[f].first, static_cast<int>(2 * f), seed, r, false});
                    say(grid + " | gnn_dt@" + families[f].first + " | seed " + std::to_string(seed) + " | test " +
                        std::to_string(r));
                }
                return cells;
            });
        }
        for (std::size_t f = 0; f < families.size(); ++f) {
            tasks.push_back([&, f] {
                const auto& set = *tests[f];
                std::vector<CellResult> cells;
                const auto bau = rollout_policy([](std::uint64_t) { return std::make_unique<BauPolicy>(); }, set);
                const auto rnd =
                    rollout_policy([](std::uint64_t seed) { return std::make_unique<RandomPolicy>(seed); }, set);
                const int order = static_cast<int>(2 * f + 1);
                cells.push_back({grid, "bau@" + families[f].first, order, 0, train::mean_reward(bau), false});
                cells.push_back({grid, "random@" + families[f].first, order, 0, train::mean_reward(rnd), false});
                return cells;
            });
        }
        finish(run_tasks(tasks, threads_));
    }

    void generalize() {
        std::vector<std::pair<std::string, ScenarioConfig>> families;
        for (auto sh : s_.shifts) {
            ScenarioConfig c = s_.scenario;
            c.generalization_shift = sh;
            families.emplace_back(to_string(sh), c);
        }
        train_then_score("generalize", families);
    }

    void scale() {
        std::vector<std::pair<std::string, ScenarioConfig>> families;
        for (int n : s_.charger_counts) families.emplace_back(std::to_string(n), with_chargers(s_.scenario, n));
        train_then_score("scale", families);
    }

    const ExperimentSpec& s_;
    int threads_;
    std::ostream& log_;
    std::mutex mu_;
    Dataset data_;
};

}  // namespace

TrialOutcome run_trial(const ModelConfig& model, const TrainConfig& train, const Dataset& data, const EvalSet& val,
                       const EvalSet& test, bool double_precision, const std::string& out_dir) {
    TrialOutcome out;
    const auto m = train_any(model, train, data, val, double_precision, out_dir, out.report);
    out.test = m.eval(test, train.rtg_update);
    out.test_reward = train::mean_reward(out.test);
    if (!out_dir.empty()) write_metrics_csv(out_dir + "/test_metrics.csv", metric_rows("gnn_dt", test, out.test));
    return out;
}

void run_experiment(const ExperimentSpec& spec, int threads, std::ostream& log) {
    spec.validate();
    if (threads < 1) throw ConfigError("threads must be >= 1");
    Runner(spec, threads, log).run();
}

}  // namespace gnndt::eval
