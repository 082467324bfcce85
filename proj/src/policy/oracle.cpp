// SPDX-License-Identifier: Apache-2.0
#include "gnndt/policy/oracle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "gnndt/error.hpp"

namespace gnndt {

void DiscretizationSpec::validate() const {
    if (levels.empty()) throw ConfigError("discretization needs at least one level");
    if (!std::is_sorted(levels.begin(), levels.end())) throw ConfigError("discretization levels must be sorted");
    if (std::adjacent_find(levels.begin(), levels.end()) != levels.end()) throw ConfigError("duplicate discretization level");
    if (levels.front() < -1.0 || levels.back() > 1.0) throw ConfigError("discretization levels must lie in [-1, 1]");
    if (std::find(levels.begin(), levels.end(), 0.0) == levels.end()) throw ConfigError("discretization must contain 0");
}

double replay_objective(const Scenario& scenario, const std::vector<std::vector<double>>& actions) {
    if (static_cast<int>(actions.size()) != scenario.horizon()) throw ConfigError("plan length != horizon");
    SimState s = initial_state(scenario);
    double total = 0.0;
    for (int t = 0; t < scenario.horizon(); ++t) {
        StepOutcome o = step(scenario, s, actions[t]);
        total += o.reward.total;
        s = std::move(o.next);
    }
    return total;
}

double log_search_size(const Scenario& scenario, const DiscretizationSpec& spec) {
    double occupancy = 0.0;
    for (const auto& s : scenario.sessions) occupancy += s.t_departure - s.t_arrival;
    return occupancy * std::log(static_cast<double>(spec.levels.size()));
}

namespace {

struct Segment {
    double cost;   // EUR per kWh moved upward
    double width;  // kWh
};

double bound_with_grid(const Scenario& sc, const ChargingSession& s, int t, double e, double max_level, double min_level) {
    const double dt = sc.dt();
    const double c = s.p_charge_max * std::max(0.0, max_level);
    const double d = s.p_discharge_max_mag * std::max(0.0, -min_level);
    const double w = sc.config.weight_satisfaction;

    std::vector<Segment> segs;
    double delta0 = 0.0;
    double value0 = 0.0;
    for (int tau = std::max(t, s.t_arrival); tau < s.t_departure; ++tau) {
        if (d > 0.0) {
            segs.push_back({sc.price_discharge[tau], d * dt});
            delta0 -= d * dt;
            value0 += sc.price_discharge[tau] * d * dt;
        }
        if (c > 0.0) segs.push_back({sc.price_charge[tau], c * dt});
    }
    std::sort(segs.begin(), segs.end(), [](const Segment& a, const Segment& b) { return a.cost < b.cost; });

    const double lo = std::max(delta0, s.e_min - e);
    double reach = delta0;
    for (const auto& g : segs) reach += g.width;
    const double hi = std::min(reach, s.e_max - e);

    auto objective = [&](double delta, double g_at) {
        double gap = e + delta - s.e_target;
        return g_at - w * gap * gap;
    };

    double best = -std::numeric_limits<double>::infinity();
    double a = delta0;
    double g_a = value0;
    auto consider = [&](double seg_lo, double seg_hi, double g_lo, double slope) {
        double x_lo = std::max(seg_lo, lo);
        double x_hi = std::min(seg_hi, hi);
        if (x_lo > x_hi) return;
        double x = std::clamp(s.e_target - e + slope / (2.0 * w), x_lo, x_hi);
        best = std::max(best, objective(x, g_lo + slope * (x - seg_lo)));
        best = std::max(best, objective(x_lo, g_lo + slope * (x_lo - seg_lo)));
        best = std::max(best, objective(x_hi, g_lo + slope * (x_hi - seg_lo)));
    };
    if (segs.empty()) {
        consider(a, a, g_a, 0.0);
    }
    for (const auto& g : segs) {
        consider(a, a + g.width, g_a, -g.cost);
        g_a -= g.cost * g.width;
        a += g.width;
    }
    if (!std::isfinite(best)) best = objective(std::clamp(0.0, lo, hi), value0);
    return best + 1e-9 * (1.0 + std::abs(best));
}

using Plan = std::vector<std::vector<double>>;

class Search {
public:
    Search(const Scenario& sc, const DiscretizationSpec& spec, OracleMode mode, const OracleOptions& opt)
        : sc_(sc), spec_(spec), mode_(mode), opt_(opt), start_(std::chrono::steady_clock::now()) {
        current_.assign(sc.horizon(), std::vector<double>(sc.num_chargers(), 0.0));
    }

    OracleSolution run() {
        OracleSolution sol;
        best_plan_ = current_;
        best_ = replay_objective(sc_, best_plan_);
        if (mode_ == OracleMode::branch_and_bound) {
            warm_start();
            sol.warm_start_objective = best_;
            guide_ = best_plan_;
        } else {
            best_ = -std::numeric_limits<double>::infinity();
        }
        SimState s0 = initial_state(sc_);
        dfs(s0, 0.0);
        sol.actions = best_plan_;
        sol.objective = best_;
        sol.node_count = nodes_;
        sol.proven_optimal = !timed_out_;
        if (mode_ == OracleMode::exhaustive) sol.warm_start_objective = best_;
        return sol;
    }

private:
    double bound(const SimState& s) const {
        double ub = 0.0;
        const double hi = spec_.levels.back();
        const double lo = spec_.levels.front();
        for (const auto& sess : sc_.sessions) {
            if (sess.t_departure <= s.t) continue;
            if (sess.t_arrival <= s.t) {
                ub += bound_with_grid(sc_, sess, s.t, s.battery_energy[sess.charger_id], hi, lo);
            } else {
                ub += bound_with_grid(sc_, sess, sess.t_arrival, sess.e_arrival, hi, lo);
            }
        }
        return ub;
    }

    bool out_of_time() {
        if (mode_ != OracleMode::branch_and_bound) return false;
        if (timed_out_) return true;
        if (opt_.node_budget > 0 && nodes_ >= opt_.node_budget) return timed_out_ = true;
        if ((nodes_ & 1023) == 0) {
            double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
            if (elapsed > opt_.time_budget_s) timed_out_ = true;
        }
        return timed_out_;
    }

    void dfs(const SimState& s, double reward) {
        const int t = s.t;
        if (t == sc_.horizon()) {
            if (reward > best_) {
                best_ = reward;
                best_plan_ = current_;
            }
            return;
        }
        if (mode_ == OracleMode::branch_and_bound && reward + bound(s) <= best_) return;

        std::vector<int> active;
        for (int i = 0; i < sc_.num_chargers(); ++i) {
            if (s.connected[i] >= 0) active.push_back(i);
        }
        // per active charger, the order in which grid levels are tried
        std::vector<std::vector<double>> order(active.size());
        for (std::size_t k = 0; k < active.size(); ++k) {
            order[k] = spec_.levels;
            if (mode_ == OracleMode::branch_and_bound) {
                double g = guide_[t][active[k]];
                auto it = std::find(order[k].begin(), order[k].end(), g);
                if (it != order[k].end()) std::rotate(order[k].begin(), it, it + 1);
            }
        }
        std::vector<std::size_t> digit(active.size(), 0);
        std::vector<double>& a = current_[t];
        std::fill(a.begin(), a.end(), 0.0);
        while (true) {
            for (std::size_t k = 0; k < active.size(); ++k) a[active[k]] = order[k][digit[k]];
            StepOutcome o = step(sc_, s, a);
            ++nodes_;
            dfs(o.next, reward + o.reward.total);
            if (out_of_time()) return;
            std::size_t k = 0;
            while (k < digit.size() && ++digit[k] == order[k].size()) digit[k++] = 0;
            if (k == digit.size()) break;
            for (std::size_t m = 0; m < active.size(); ++m) a[active[m]] = order[m][digit[m]];
        }
        std::fill(a.begin(), a.end(), 0.0);
    }

    // Coordinate descent: re-plan one session at a time by dynamic programming over grid levels with
    // the other chargers' applied powers held fixed, keeping a change only if the exact replay improves.
    void warm_start() {
        if (sc_.sessions.empty()) return;
        for (int pass = 0; pass < opt_.warm_start_passes; ++pass) {
            bool improved = false;
            for (std::size_t k = 0; k < sc_.sessions.size(); ++k) {
                Plan trial = best_plan_;
                replan_session(trial, sc_.sessions[k]);
                double obj = replay_objective(sc_, trial);
                if (obj > best_ + 1e-12 * (1.0 + std::abs(best_))) {
                    best_ = obj;
                    best_plan_ = std::move(trial);
                    improved = true;
                }
            }
            if (!improved) break;
        }
    }

    void replan_session(Plan& plan, const ChargingSession& sess) {
        const int i = sess.charger_id;
        for (int t = sess.t_arrival; t < sess.t_departure; ++t) plan[t][i] = 0.0;
        std::vector<double> others(sc_.horizon(), 0.0);
        {
            SimState s = initial_state(sc_);
            for (int t = 0; t < sc_.horizon(); ++t) {
                StepOutcome o = step(sc_, s, plan[t]);
                for (int c = 0; c < sc_.num_chargers(); ++c) {
                    if (c != i) others[t] += o.applied_kw[c];
                }
                s = std::move(o.next);
            }
        }
        const double dt = sc_.dt();
        const double wv = sc_.config.weight_violation;
        const double ws = sc_.config.weight_satisfaction;
        std::unordered_map<std::int64_t, std::pair<double, int>> memo;
        const std::int64_t stride = 1LL << 40;

        // returns best value-to-go from (t, e); memo stores the argmax level index
        auto solve = [&](auto&& self, int t, double e) -> double {
            if (t == sess.t_departure) return 0.0;
            std::int64_t key = static_cast<std::int64_t>(t - sess.t_arrival) * stride + std::llround(e * 1e6);
            if (auto it = memo.find(key); it != memo.end()) return it->second.first;
            double best = -std::numeric_limits<double>::infinity();
            int arg = 0;
            for (std::size_t l = 0; l < spec_.levels.size(); ++l) {
                double p = requested_power(sess, spec_.levels[l]);
                p = std::clamp(p, std::min((sess.e_min - e) / dt, 0.0), std::max((sess.e_max - e) / dt, 0.0));
                double e2 = e + p * dt;
                double r = -dt * (p >= 0.0 ? sc_.price_charge[t] * p : sc_.price_discharge[t] * p);
                r -= wv * (std::max(0.0, others[t] + p - sc_.power_setpoint[t]) -
                           std::max(0.0, others[t] - sc_.power_setpoint[t]));
                if (t + 1 == sess.t_departure) r -= ws * (e2 - sess.e_target) * (e2 - sess.e_target);
                double v = r + self(self, t + 1, e2);
                if (v > best) {
                    best = v;
                    arg = static_cast<int>(l);
                }
            }
            memo[key] = {best, arg};
            return best;
        };
        solve(solve, sess.t_arrival, sess.e_arrival);
        double e = sess.e_arrival;
        for (int t = sess.t_arrival; t < sess.t_departure; ++t) {
            std::int64_t key = static_cast<std::int64_t>(t - sess.t_arrival) * stride + std::llround(e * 1e6);
            int l = memo.at(key).second;
            plan[t][i] = spec_.levels[l];
            double p = requested_power(sess, spec_.levels[l]);
            p = std::clamp(p, std::min((sess.e_min - e) / dt, 0.0), std::max((sess.e_max - e) / dt, 0.0));
            e += p * dt;
        }
    }

    const Scenario& sc_;
    const DiscretizationSpec& spec_;
    OracleMode mode_;
    OracleOptions opt_;
    std::chrono::steady_clock::time_point start_;
    Plan current_;
    Plan best_plan_;
    Plan guide_;
    double best_ = -std::numeric_limits<double>::infinity();
    std::uint64_t nodes_ = 0;
    bool timed_out_ = false;
};

}  // namespace

double session_value_bound(const Scenario& scenario, const ChargingSession& session, int t, double e) {
    return bound_with_grid(scenario, session, t, e, 1.0, -1.0);
}

OracleSolution oracle_solve(const Scenario& scenario, const DiscretizationSpec& spec, OracleMode mode,
                            const OracleOptions& options) {
    spec.validate();
    if (mode == OracleMode::exhaustive && log_search_size(scenario, spec) > std::log(options.max_exhaustive_leaves)) {
        throw RuntimeFailure("exhaustive search size exceeds the configured cap of " +
                             std::to_string(options.max_exhaustive_leaves) + " leaves");
    }
    Search search(scenario, spec, mode, options);
    return search.run();
}

nlohmann::json to_json(const OracleSolution& s) {
    return {{"actions", s.actions},
            {"objective", s.objective},
            {"node_count", s.node_count},
            {"proven_optimal", s.proven_optimal},
            {"warm_start_objective", s.warm_start_objective}};
}

}  // namespace gnndt
