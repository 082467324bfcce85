// SPDX-License-Identifier: Apache-2.0
// End-to-end acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "../unit/support.hpp"
#include "gnndt/ad/gradcheck.hpp"
#include "gnndt/ad/optim.hpp"
#include "gnndt/eval/experiments.hpp"
#include "gnndt/eval/metrics.hpp"
#include "gnndt/eval/report.hpp"
#include "gnndt/train/trainer.hpp"

using namespace gnndt;
using model::GnnDt;
using model::ModelConfig;
using Clock = std::chrono::steady_clock;

namespace {

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), f, args...);
    return buf;
}

struct Verdict {
    bool pass = false;
    std::string detail;
};

double mean(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::string join(const std::vector<double>& v) {
    std::string s;
    for (double x : v) s += (s.empty() ? "" : " ") + fmt("%.0f", x);
    return "[" + s + "]";
}

std::vector<int> shuffled(int n, std::mt19937_64& rng) {
    std::vector<int> p(n);
    std::iota(p.begin(), p.end(), 0);
    std::shuffle(p.begin(), p.end(), rng);
    return p;
}

template <class T>
void jitter(ad::ParameterStore<T>& ps, std::uint64_t seed, double std) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, std);
    for (auto* p : ps.all())
        for (auto& v : p->value.data) v += static_cast<T>(n(rng));
}

ModelConfig small_model(int K) {
    ModelConfig c;
    c.context_K = K;
    c.embed_dim = 16;
    c.gnn_feature_dim = 4;
    c.gnn_hidden_dim = 8;
    c.gcn_layers_state = 2;
    c.gcn_layers_action = 2;
    c.decoder_layers = 1;
    c.attention_heads = 2;
    return c;
}

Dataset rollouts(int chargers, int horizon, int episodes, std::uint64_t seed, double gamma = 1.0) {
    Dataset d;
    for (int e = 0; e < episodes; ++e) {
        auto sc = std::make_shared<const Scenario>(generate_scenario(testing::small_config(chargers, horizon), seed + e));
        if (e % 3 == 0) {
            CafapPolicy p;
            d.trajectories.push_back(record_trajectory(p, sc, gamma));
        } else if (e % 3 == 1) {
            BauPolicy p;
            d.trajectories.push_back(record_trajectory(p, sc, gamma));
        } else {
            RandomPolicy p(seed + e);
            d.trajectories.push_back(record_trajectory(p, sc, gamma));
        }
    }
    d.refresh_meta();
    return d;
}

// first window end >= from whose last step has at least min_evs connected EVs
std::optional<Window> busy_window(const Dataset& d, int index, int K, int min_evs, int from) {
    const auto& tr = d.trajectories.at(index);
    for (int t = std::max(from, K - 1); t < tr.length(); ++t) {
        int evs = 0;
        for (int i : tr.steps[t].graph.ev_node_by_charger) evs += i >= 0;
        if (evs >= min_evs) return make_window(d, index, t, K);
    }
    return std::nullopt;
}

// ---- criteria 1-7, 12 ----

Verdict oracle_equivalence() {
    const auto t0 = Clock::now();
    int equal = 0, n = 0;
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 24; ++seed) {
        const auto inst = testing::tiny_instance(seed);
        const auto ex = oracle_solve(inst.scenario, inst.grid, OracleMode::exhaustive);
        OracleOptions opt;
        opt.time_budget_s = 60.0;
        const auto bb = oracle_solve(inst.scenario, inst.grid, OracleMode::branch_and_bound, opt);
        ++n;
        equal += ex.objective == bb.objective && bb.proven_optimal;
        worst = std::max(worst, std::abs(ex.objective - bb.objective));
    }
    const double s = since(t0);
    return {equal == n && s < 60.0, fmt("%d/%d instances equal exactly (max gap %.3g), %.2f s", equal, n, worst, s)};
}

Verdict gradient_check() {
    const auto t0 = Clock::now();
    const auto d = rollouts(2, 96, 3, 70);
    auto cfg = small_model(3);
    GnnDt<double> m(cfg, 16);
    jitter(m.params(), 17, 0.2);
    std::vector<Window> ws;
    for (int i = 0; i < 3 && ws.size() < 2; ++i)
        if (auto w = busy_window(d, i, 3, 2, 5)) ws.push_back(*w);
    ws.push_back(make_window(d, 0, 1, 3));  // left-padded
    const auto mb = model::make_batch(ws);
    const auto r = ad::finite_difference_check(
        [&](ad::Tape<double>& tape) { return m.loss(tape, mb, m.forward(tape, mb)); }, m.params(), 1e-5);
    const double s = since(t0);
    return {r.max_rel_error < 1e-3 && s < 300.0,
            fmt("max relative error %.3g over %zu scalars (worst %s), %.1f s", r.max_rel_error, r.checked,
                r.worst_param.c_str(), s)};
}

Verdict permutation_suite() {
    const auto t0 = Clock::now();
    auto cfg = small_model(3);
    cfg.gcn_layers_state = 3;
    cfg.gcn_layers_action = 3;
    GnnDt<double> m(cfg, 1);
    jitter(m.params(), 2, 0.3);
    std::mt19937_64 rng(9);
    double pooled_err = 0.0, node_err = 0.0, act_err = 0.0;
    int states = 0;
    for (std::uint64_t seed = 0; states < 20 && seed < 200; ++seed) {
        auto c = testing::small_config(2 + static_cast<int>(seed % 7), 96);
        c.num_groups = 1 + static_cast<int>(seed % 3);
        c.num_groups = std::min(c.num_groups, c.num_chargers);
        Dataset d;
        RandomPolicy p(seed);
        d.trajectories.push_back(record_trajectory(p, std::make_shared<const Scenario>(generate_scenario(c, seed))));
        const auto w = busy_window(d, 0, 3, 2, 10 + static_cast<int>(seed % 40));
        if (!w) continue;
        ++states;
        const auto mb = model::make_batch({*w});
        const StateGraph& g = *mb.at(0, 2).state;
        ad::Tape<double> t_base(false);
        const auto base = m.embed_state(t_base, {&g});
        ad::Tape<double> t_fwd(false);
        const auto base_act = m.actions_at(mb, m.forward(t_fwd, mb), 2);
        for (int rep = 0; rep < 100; ++rep) {
            const auto perm = shuffled(g.size(), rng);
            const auto pg = permute_graph(g, perm);
            ad::Tape<double> t1(false);
            const auto e = m.embed_state(t1, {&pg});
            const auto& bp = base.pooled.value();
            for (int c2 = 0; c2 < bp.cols; ++c2)
                pooled_err = std::max(pooled_err, std::abs(e.pooled.value()(0, c2) - bp(0, c2)));
            for (int v = 0; v < g.size(); ++v)
                for (int c2 = 0; c2 < bp.cols; ++c2)
                    node_err = std::max(node_err,
                                        std::abs(e.per_node.value()(perm[v], c2) - base.per_node.value()(v, c2)));

            std::vector<StateGraph> owned;
            owned.reserve(6);
            auto pmb = mb;
            for (int k = 0; k < 3; ++k) {
                const auto& s = mb.at(0, k);
                if (!s.state) continue;
                owned.push_back(permute_graph(*s.state, shuffled(s.state->size(), rng)));
                pmb.steps[k].state = &owned.back();
                if (s.prev_state) {
                    owned.push_back(permute_graph(*s.prev_state, shuffled(s.prev_state->size(), rng)));
                    pmb.steps[k].prev_state = &owned.back();
                }
            }
            ad::Tape<double> t2(false);
            const auto got = m.actions_at(pmb, m.forward(t2, pmb), 2);
            for (std::size_t i = 0; i < got[0].size(); ++i)
                act_err = std::max(act_err, std::abs(got[0][i] - base_act[0][i]));
        }
    }
    const bool ok = states == 20 && pooled_err < 1e-6 && node_err < 1e-6 && act_err < 1e-6;
    return {ok, fmt("%d states x 100 permutations: pooled %.2g, per-node %.2g, actions %.2g, %.1f s", states,
                    pooled_err, node_err, act_err, since(t0))};
}

Verdict simulator_laws() {
    const auto t0 = Clock::now();
    double energy_res = 0.0, bound_excess = 0.0, group_excess = 0.0;
    long identity_fail = 0, steps = 0;
    for (std::uint64_t ep = 0; ep < 1000; ++ep) {
        auto c = testing::small_config(1 + static_cast<int>(ep % 8), 96);
        c.num_groups = std::min(c.num_chargers, 1 + static_cast<int>(ep % 3));
        const auto sc = generate_scenario(c, 50000 + ep);
        std::mt19937_64 rng(ep);
        std::uniform_real_distribution<double> u(-1.5, 1.5);
        SimState st = initial_state(sc);
        for (int t = 0; t < sc.horizon(); ++t, ++steps) {
            std::vector<double> a(sc.num_chargers());
            for (auto& x : a) x = u(rng);
            const auto out = step(sc, st, a);
            std::map<int, double> departed;
            for (const auto& dep : out.departures) departed[dep.session_id] = dep.energy_kwh;
            std::vector<double> charge(sc.num_groups(), 0.0);  // net kW per group
            for (int i = 0; i < sc.num_chargers(); ++i) {
                charge[sc.charger_group[i]] += out.applied_kw[i];
                const int sid = st.connected[i];
                if (sid < 0) continue;
                const auto& s = sc.sessions[sid];
                const double moved = out.applied_kw[i] * sc.dt();
                const double after = out.next.connected[i] == sid ? out.next.battery_energy[i] : departed.at(sid);
                energy_res = std::max(energy_res, std::abs(after - st.battery_energy[i] - moved));
                bound_excess = std::max({bound_excess, s.e_min - after, after - s.e_max});
            }
            for (int g = 0; g < sc.num_groups(); ++g)
                group_excess = std::max(group_excess, charge[g] - sc.group_limits[g][t]);
            const auto& r = out.reward;
            identity_fail += r.total != r.energy_term - sc.config.weight_violation * r.violation_kw -
                                            sc.config.weight_satisfaction * r.satisfaction_penalty;
            st = out.next;
        }
    }
    const bool ok = energy_res < 1e-9 && bound_excess <= 1e-9 && group_excess <= 1e-9 && identity_fail == 0;
    return {ok, fmt("1000 episodes, %ld steps: energy residual %.2g kWh, battery excess %.2g, group excess %.2g, "
                    "%ld identity failures, %.1f s",
                    steps, energy_res, std::max(0.0, bound_excess), std::max(0.0, group_excess), identity_fail,
                    since(t0))};
}

Verdict rtg_and_mask() {
    const auto t0 = Clock::now();
    long checked = 0, broken = 0;
    auto check_rtg = [&](const Dataset& d) {
        for (const auto& tr : d.trajectories) {
            const auto r = tr.rewards();
            const int T = tr.length();
            broken += tr.rtg[T - 1] != r[T - 1];
            for (int t = 0; t + 1 < T; ++t) broken += tr.rtg[t] != r[t] + tr.gamma * tr.rtg[t + 1];
            checked += T;
        }
    };
    const auto path = (std::filesystem::temp_directory_path() / "gnndt_acceptance_rtg.jsonl.gz").string();
    for (double gamma : {1.0, 0.99}) {
        const auto d = rollouts(3, 96, 30, 900, gamma);
        check_rtg(d);
        save_dataset(d, path);
        check_rtg(load_dataset(path));
    }
    std::filesystem::remove(path);

    // gradient reaching masked outputs: plain head, mask loss on, left-padded windows
    auto cfg = small_model(4);
    cfg.use_residual_decode = false;
    cfg.num_chargers = 4;
    GnnDt<double> m(cfg, 3);
    jitter(m.params(), 4, 0.2);
    const auto d = rollouts(4, 96, 3, 910);
    std::vector<Window> ws = {make_window(d, 0, 1, 4), make_window(d, 1, 40, 4), make_window(d, 2, 70, 4)};
    const auto mb = model::make_batch(ws);
    ad::Tape<double> tape;
    const auto out = m.forward(tape, mb);
    tape.backward(m.loss(tape, mb, out));
    const auto& gy = tape.grad(out.y.id);
    long masked = 0, nonzero = 0, live = 0;
    for (int r = 0; r < gy.rows; ++r) {
        const auto& s = mb.steps[r];
        for (int i = 0; i < gy.cols; ++i) {
            const bool on = !s.pad && s.state && s.state->ev_node_by_charger[i] >= 0;
            if (on) {
                live += gy(r, i) != 0.0;
                continue;
            }
            ++masked;
            nonzero += gy(r, i) != 0.0;
        }
    }
    const bool ok = broken == 0 && nonzero == 0 && masked > 0 && live > 0;
    return {ok, fmt("RTG identity broken at %ld of %ld steps (incl. after save/load); %ld of %ld masked output "
                    "gradients nonzero, %ld live; %.1f s",
                    broken, checked, nonzero, masked, live, since(t0))};
}

Verdict causality() {
    const auto t0 = Clock::now();
    const auto d = rollouts(3, 96, 6, 40);
    GnnDt<double> m(small_model(6), 11);
    jitter(m.params(), 12, 0.2);
    double leak = 0.0;
    int windows = 0, later_moved = 0, perturbations = 0;
    for (int i = 0; i < 6; ++i) {
        for (int end : {20, 50, 80}) {
            const auto mb = model::make_batch({make_window(d, i, end, 6)});
            ad::Tape<double> t_base(false);
            const auto base = m.forward(t_base, mb);
            ++windows;
            for (int t = 1; t < 6; ++t) {
                auto pmb = mb;
                pmb.steps[t].rtg += 4321.0;
                std::vector<double> flipped = *mb.steps[t].prev_action;
                for (auto& v : flipped) v = 0.5 - v;
                pmb.steps[t].prev_action = &flipped;
                const StateGraph other = d.trajectories[(i + 1) % 6].steps[end].graph;
                pmb.steps[t].state = &other;
                ad::Tape<double> t1(false);
                const auto out = m.forward(t1, pmb);
                ++perturbations;
                bool moved = false;
                // earlier rows keep their slots, so compare slot by slot while they line up
                for (std::size_t e = 0; e < out.slots.size() && e < base.slots.size(); ++e) {
                    if (out.slots[e].row >= t) break;
                    leak = std::max(leak, std::abs(out.pred.value().data[e] - base.pred.value().data[e]));
                }
                const auto& yb = base.y.value();
                const auto& yo = out.y.value();
                for (int r = 0; r < yb.rows; ++r)
                    for (int c2 = 0; c2 < yb.cols; ++c2) {
                        const double diff = std::abs(yo(r, c2) - yb(r, c2));
                        if (r < t) leak = std::max(leak, diff);
                        else moved = moved || diff > 1e-9;
                    }
                later_moved += moved;
            }
        }
    }
    return {leak < 1e-9 && later_moved == perturbations,
            fmt("%d windows, %d perturbations: max change before the perturbed step %.2g, later steps moved in "
                "%d/%d, %.1f s",
                windows, perturbations, leak, later_moved, perturbations, since(t0))};
}

Verdict overfit() {
    const auto t0 = Clock::now();
    const auto d = rollouts(3, 96, 2, 80);
    auto cfg = small_model(3);
    cfg.embed_dim = 32;
    cfg.gnn_feature_dim = 8;
    cfg.gnn_hidden_dim = 16;
    GnnDt<float> m(cfg, 18);
    std::mt19937_64 rng(19);
    const auto mb = model::make_batch(sample_window(d, 3, 8, rng));
    ad::AdamWConfig oc;
    oc.lr = 1e-3;
    oc.warmup_steps = 50;
    ad::AdamW<float> opt(m.params(), oc);
    double loss = 1.0;
    int steps = 0;
    for (; steps < 2000 && loss >= 1e-3; ++steps) {
        m.params().zero_grad();
        ad::Tape<float> tape;
        const auto l = m.loss(tape, mb, m.forward(tape, mb));
        loss = l.item();
        if (loss < 1e-3) break;
        tape.backward(l);
        opt.step();
    }
    const double s = since(t0);
    return {loss < 1e-3 && s < 600.0, fmt("loss %.3g after %d steps, %.1f s", loss, steps, s)};
}

Verdict metrics_examples() {
    using testing::manual_scenario;
    using testing::session;
    std::vector<std::string> bad;
    auto expect = [&](bool cond, const char* what) {
        if (!cond) bad.push_back(what);
    };
    auto run = [](const Scenario& sc, std::vector<std::vector<double>> plan) {
        PlanPolicy p(std::move(plan), PolicyTag::optimal);
        return record_trajectory(p, std::make_shared<const Scenario>(sc));
    };
    {  // leaves with 8 of 10 kWh
        const auto sc = manual_scenario(1, 3, 0.2, 50.0, {session(0, 0, 2, 8.0, 10.0)});
        const auto tr = run(sc, {{0.0}, {0.0}, {0.0}});
        const auto m = eval::compute_metrics(tr);
        expect(m.satisfaction_pct == 80.0, "satisfaction 80");
        expect(tr.steps[1].breakdown.satisfaction_penalty == 4.0, "penalty 4");
        expect(m.reward == -40.0, "reward -40");
    }
    {  // everyone at target
        const auto sc = manual_scenario(2, 4, 0.2, 50.0, {session(0, 0, 2, 10.0, 10.0), session(1, 1, 3, 7.5, 7.5)});
        expect(eval::compute_metrics(run(sc, std::vector<std::vector<double>>(4, {0.0, 0.0}))).satisfaction_pct ==
                   100.0,
               "satisfaction 100");
    }
    {  // zero actions all episode
        const auto sc = generate_scenario(testing::small_config(3, 96), 5);
        const auto m = eval::compute_metrics(run(sc, std::vector<std::vector<double>>(96, {0.0, 0.0, 0.0})));
        expect(m.energy_charged_kwh == 0.0 && m.cost_eur == 0.0 && m.energy_discharged_kwh == 0.0, "zero actions");
    }
    {  // 2 kWh need at 11 kW over 15 min: a = 2/2.75, 2 kWh delivered at 0.2 EUR/kWh
        const auto sc = manual_scenario(1, 2, 0.2, 50.0, {session(0, 0, 2, 10.0, 12.0)});
        const auto a = cafap_policy(sc, initial_state(sc));
        expect(std::abs(a[0] - 2.0 / 2.75) < 1e-12, "cafap 2/2.75");
        const auto m = eval::compute_metrics(run(sc, {a, {0.0}}));
        expect(std::abs(m.energy_charged_kwh - 2.0) < 1e-12, "cafap energy 2");
        expect(std::abs(m.cost_eur + 0.4) < 1e-12, "cafap cost -0.4");
        expect(m.satisfaction_pct == 100.0, "cafap satisfaction");
    }
    {  // two full-need EVs against a 5 kW setpoint
        const auto sc =
            manual_scenario(2, 1, 0.2, 5.0, {session(0, 0, 1, 10.0, 40.0), session(1, 0, 1, 10.0, 40.0)});
        const auto a = cafap_policy(sc, initial_state(sc));
        expect(eval::compute_metrics(run(sc, {a})).violation_kw == 17.0, "violation 17");
    }
    {  // oracle two-step example: defer to the cheap step
        auto sc = manual_scenario(1, 2, 0.5, 50.0, {session(0, 0, 2, 10.0, 12.5, 60.0, 10.0, 10.0)});
        sc.price_charge = {0.5, 0.1};
        sc.price_discharge = {0.45, 0.09};
        DiscretizationSpec grid;
        grid.levels = {0.0, 1.0};
        const auto sol = oracle_solve(sc, grid, OracleMode::exhaustive);
        const auto m = eval::compute_metrics(run(sc, sol.actions));
        expect(std::abs(sol.objective + 0.25) < 1e-12 && m.reward == sol.objective, "oracle -0.25");
        expect(std::abs(m.cost_eur + 0.25) < 1e-12, "oracle cost");
    }
    {  // episode reward identity
        for (std::uint64_t s = 0; s < 20; ++s) {
            const auto sc = std::make_shared<const Scenario>(generate_scenario(testing::small_config(4, 96), s));
            RandomPolicy p(s);
            const auto tr = record_trajectory(p, sc);
            SimState st = initial_state(*sc);
            double total = 0.0;
            for (int t = 0; t < sc->horizon(); ++t) {
                const auto o = step(*sc, st, tr.steps[t].action);
                total += o.reward.total;
                st = o.next;
            }
            if (eval::compute_metrics(tr).reward != total) {
                bad.push_back("episode reward");
                break;
            }
        }
    }
    {  // summary of two seeds
        const auto rows = eval::summarize(std::vector<eval::CellResult>{{"g", "c", 0, 0, -1.0, false},
                                                                       {"g", "c", 0, 1, -3.0, false}});
        expect(rows.size() == 1 && rows[0].mean == -2.0 && std::abs(rows[0].std - std::sqrt(2.0)) < 1e-15,
               "-2 +/- sqrt 2");
    }
    std::string detail = bad.empty() ? "all worked examples reproduced" : "mismatch:";
    for (const auto& b : bad) detail += " [" + b + "]";
    return {bad.empty(), detail};
}

// ---- desk-scale learning criteria ----

struct Desk {
    int steps = 1000;  // optimizer steps per training run
    int batch = 32;
    int seeds = 5;
    std::uint64_t oracle_nodes = 50000;
    int val_scenarios = 10;
    int test_scenarios = 20;
    std::string out;

    ScenarioConfig scenario(int chargers = 3) const { return testing::small_config(chargers, 96); }

    ModelConfig model() const {
        ModelConfig m;
        m.embed_dim = 64;
        m.context_K = 10;
        m.max_episode_steps = 96;
        return m;
    }

    train::TrainConfig train(std::uint64_t seed) const {
        train::TrainConfig t;
        t.batch_size = batch;
        t.steps_per_epoch = 100;
        t.epochs = std::max(1, steps / 100);
        t.lr = 5e-4;
        t.warmup_steps = 100;
        t.eval_scenarios = val_scenarios;
        t.target_rtg_mode = train::TargetRtgMode::oracle_estimate;
        t.oracle_nodes = oracle_nodes;
        t.seed = seed;
        return t;
    }
};

class DeskRuns {
public:
    explicit DeskRuns(Desk desk) : d_(std::move(desk)) {}

    const Dataset& oracle() {
        if (!oracle_) {
            const auto t0 = Clock::now();
            eval::DataSpec s;
            s.scenario = d_.scenario();
            s.count = 200;
            s.oracle_nodes = d_.oracle_nodes;
            oracle_ = eval::generate_dataset(s);
            log(fmt("oracle dataset: 200 episodes, mean reward %.1f, %.1f s", oracle_->meta.avg_reward, since(t0)));
        }
        return *oracle_;
    }

    const Dataset& random() {
        if (!random_) {
            eval::DataSpec s;
            s.scenario = d_.scenario();
            s.source = PolicyTag::random;
            s.count = 400;
            s.seed_base = 10000;
            random_ = eval::generate_dataset(s);
            log(fmt("random dataset: 400 episodes, mean reward %.1f", random_->meta.avg_reward));
        }
        return *random_;
    }

    const train::EvalSet& val() {
        if (!val_) val_ = train::make_eval_set(d_.scenario(), d_.train(0), oracle());
        return *val_;
    }

    const train::EvalSet& test(int chargers = 3) {
        auto it = tests_.find(chargers);
        if (it == tests_.end()) {
            Dataset both = oracle();
            both.trajectories.insert(both.trajectories.end(), random().trajectories.begin(),
                                     random().trajectories.end());
            it = tests_.emplace(chargers, eval::make_test_set(d_.scenario(chargers), d_.train(0), both,
                                                              d_.test_scenarios, 2000000)).first;
        }
        return it->second;
    }

    double baseline(const std::string& name, int chargers = 3) {
        const auto key = name + "@" + std::to_string(chargers);
        if (!baselines_.count(key)) {
            eval::PolicyFactory f;
            if (name == "bau") f = [](std::uint64_t) { return std::make_unique<BauPolicy>(); };
            else f = [](std::uint64_t s) { return std::make_unique<RandomPolicy>(s); };
            baselines_[key] = train::mean_reward(eval::rollout_policy(f, test(chargers)));
        }
        return baselines_[key];
    }

    /// Test reward of one training run; `keep` receives the trained model.
    double trial(const std::string& arm, const ModelConfig& mc, const Dataset& data, std::uint64_t seed,
                 std::unique_ptr<GnnDt<float>>* keep = nullptr) {
        const auto key = arm + "#" + std::to_string(seed);
        if (auto it = results_.find(key); it != results_.end() && !keep) return it->second;
        const auto t0 = Clock::now();
        auto res = train::train<float>(mc, d_.train(seed), data, val());
        const double r = train::mean_reward(train::rollout_eval(*res.model, test(), train::RtgUpdate::decrement));
        results_[key] = r;
        log(fmt("%-12s seed %llu: test %.1f (best val %.1f at %s), %.0f s", arm.c_str(),
                static_cast<unsigned long long>(seed), r, res.report.best_eval, res.report.best_checkpoint.c_str(),
                since(t0)));
        if (!d_.out.empty()) {
            std::ofstream f(d_.out + "/desk_runs.csv", std::ios::app);
            f << arm << ',' << seed << ',' << fmt("%.6f", r) << '\n';
        }
        if (keep) *keep = std::move(res.model);
        return r;
    }

    ModelConfig full() const {
        auto m = d_.model();
        return m;
    }

    std::vector<double> arm(const std::string& name, const ModelConfig& mc, const Dataset& data) {
        std::vector<double> v;
        for (int s = 0; s < d_.seeds; ++s) v.push_back(trial(name, mc, data, static_cast<std::uint64_t>(s)));
        return v;
    }

    std::vector<double> gnn() {
        if (gnn_.empty()) {
            for (int s = 0; s < d_.seeds; ++s)
                gnn_.push_back(trial("gnn_dt", full(), oracle(), static_cast<std::uint64_t>(s), s == 0 ? &model0_ : nullptr));
        }
        return gnn_;
    }

    GnnDt<float>& model0() {
        if (!model0_) trial("gnn_dt", full(), oracle(), 0, &model0_);
        return *model0_;
    }

    const Desk& desk() const { return d_; }

    void log(const std::string& line) { std::cout << "  .. " << line << std::endl; }

private:
    Desk d_;
    std::optional<Dataset> oracle_, random_;
    std::optional<train::EvalSet> val_;
    std::map<int, train::EvalSet> tests_;
    std::map<std::string, double> baselines_;
    std::map<std::string, double> results_;
    std::vector<double> gnn_;
    std::unique_ptr<GnnDt<float>> model0_;
};

int wins(const std::vector<double>& a, const std::vector<double>& b, bool allow_tie) {
    int w = 0;
    for (std::size_t k = 0; k < a.size(); ++k) w += allow_tie ? a[k] >= b[k] : a[k] > b[k];
    return w;
}

Verdict desk_ordering(DeskRuns& runs) {
    const auto t0 = Clock::now();
    const auto g = runs.gnn();
    const auto f = runs.arm("flat_dt", model::flat_dt_config(runs.full(), 3, 1), runs.oracle());
    const double bau = runs.baseline("bau");
    const int w = wins(g, f, false);
    const bool ok = mean(g) >= bau && mean(g) >= mean(f) && w >= 4;
    return {ok, fmt("GNN-DT %.1f %s, flat DT %.1f %s, BaU %.1f; GNN-DT ahead in %d/%d seeds, %.0f s", mean(g),
                    join(g).c_str(), mean(f), join(f).c_str(), bau, w, static_cast<int>(g.size()), since(t0))};
}

Verdict ablation_direction(DeskRuns& runs) {
    const auto t0 = Clock::now();
    const auto g = runs.gnn();
    auto plain = runs.full();
    plain.use_residual_decode = false;
    plain.num_chargers = 3;
    const auto p = runs.arm("no_residual", plain, runs.oracle());
    const int w = wins(g, p, false);
    return {w >= 4, fmt("with residual %.1f %s, without %.1f %s; degraded in %d/%d seeds, %.0f s", mean(g),
                        join(g).c_str(), mean(p), join(p).c_str(), w, static_cast<int>(g.size()), since(t0))};
}

Verdict mixing_direction(DeskRuns& runs) {
    const auto t0 = Clock::now();
    Dataset oracle100;
    oracle100.trajectories.assign(runs.oracle().trajectories.begin(), runs.oracle().trajectories.begin() + 100);
    oracle100.refresh_meta();
    std::vector<double> mixed, rnd;
    for (int s = 0; s < runs.desk().seeds; ++s) {
        const auto seed = static_cast<std::uint64_t>(s);
        mixed.push_back(runs.trial("mix25", runs.full(), mix_datasets(oracle100, runs.random(), 0.25, 400, seed), seed));
        rnd.push_back(runs.trial("random400", runs.full(), mix_datasets(oracle100, runs.random(), 0.0, 400, seed), seed));
    }
    const int w = wins(mixed, rnd, true);
    return {w >= 4, fmt("25%% oracle %.1f %s, 100%% random %.1f %s; mix at least as good in %d/%d seeds, %.0f s",
                        mean(mixed), join(mixed).c_str(), mean(rnd), join(rnd).c_str(), w,
                        static_cast<int>(mixed.size()), since(t0))};
}

Verdict size_generality(DeskRuns& runs) {
    const auto t0 = Clock::now();
    auto& m = runs.model0();
    std::string detail;
    bool ran = true;
    double r6 = 0.0;
    for (int n : {1, 6, 10}) {
        try {
            const double r = train::mean_reward(train::rollout_eval(m, runs.test(n), train::RtgUpdate::decrement));
            detail += fmt("%d chargers %.1f (random %.1f); ", n, r, runs.baseline("random", n));
            if (n == 6) r6 = r;
        } catch (const std::exception& e) {
            ran = false;
            detail += fmt("%d chargers failed: %s; ", n, e.what());
        }
    }
    const bool ok = ran && r6 > runs.baseline("random", 6);
    return {ok, detail + fmt("%.0f s", since(t0))};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    std::vector<int> only;
    Desk desk;
    app.add_option("--only", only, "criteria to run (default all)");
    app.add_option("--steps", desk.steps, "optimizer steps per desk-scale training run");
    app.add_option("--seeds", desk.seeds, "training seeds per arm");
    app.add_option("--out", desk.out, "directory for per-run results");
    CLI11_PARSE(app, argc, argv);
    if (!desk.out.empty()) {
        std::filesystem::create_directories(desk.out);
        std::ofstream(desk.out + "/desk_runs.csv", std::ios::trunc) << "arm,seed,test_reward\n";
    }

    DeskRuns runs(desk);
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
        {"oracle equivalence", oracle_equivalence},
        {"gradient correctness", gradient_check},
        {"permutation suite", permutation_suite},
        {"simulator laws", simulator_laws},
        {"RTG identity and masked gradients", rtg_and_mask},
        {"causality", causality},
        {"single-batch overfit", overfit},
        {"desk-scale ordering", [&] { return desk_ordering(runs); }},
        {"ablation direction", [&] { return ablation_direction(runs); }},
        {"mixing direction", [&] { return mixing_direction(runs); }},
        {"size generality", [&] { return size_generality(runs); }},
        {"metrics cross-check", metrics_examples},
    };
    int failed = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        const int id = static_cast<int>(k) + 1;
        if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
        Verdict v;
        try {
            v = criteria[k].second();
        } catch (const std::exception& e) {
            v = {false, std::string("threw: ") + e.what()};
        }
        failed += !v.pass;
        std::cout << "criterion " << id << " " << (v.pass ? "PASS" : "FAIL") << " " << criteria[k].first << ": "
                  << v.detail << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
