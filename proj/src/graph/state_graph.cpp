// SPDX-License-Identifier: Apache-2.0
#include "gnndt/graph/state_graph.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gnndt/error.hpp"

namespace gnndt {

int feature_width(NodeKind kind) {
    switch (kind) {
        case NodeKind::EV: return 5;
        case NodeKind::CS: return 3;
        case NodeKind::TR: return 2;
        case NodeKind::CPO: return 5;
        case NodeKind::EV_ACTION: return 3;
    }
    return 0;
}

std::string to_string(NodeKind kind) {
    switch (kind) {
        case NodeKind::EV: return "EV";
        case NodeKind::CS: return "CS";
        case NodeKind::TR: return "TR";
        case NodeKind::CPO: return "CPO";
        case NodeKind::EV_ACTION: return "EV_ACTION";
    }
    return "?";
}

NodeKind parse_node_kind(const std::string& name) {
    for (int k = 0; k < kNumNodeKinds; ++k) {
        if (to_string(static_cast<NodeKind>(k)) == name) return static_cast<NodeKind>(k);
    }
    throw ConfigError("unknown node kind '" + name + "'");
}

StateGraph build_state_graph(const SimState& state, const Scenario& scenario) {
    const int n = scenario.num_chargers();
    const int groups = scenario.num_groups();
    const int t = std::min(state.t, scenario.horizon() - 1);
    const int per_day = scenario.config.steps_per_day();

    StateGraph g;
    g.num_chargers = n;
    g.num_groups = groups;
    g.nodes.reserve(1 + groups + n + state.num_connected());

    const int step_of_day = state.t % per_day;
    const double day = static_cast<double>((state.t / per_day) % 7);
    const double angle = 2.0 * std::numbers::pi * step_of_day / per_day;
    g.nodes.push_back({NodeKind::CPO,
                       {day / 7.0, std::sin(angle), std::cos(angle), scenario.price_charge[t], state.prev_total_power},
                       {}});

    for (int w = 0; w < groups; ++w) {
        g.nodes.push_back({NodeKind::TR, {scenario.group_limits[w][t], static_cast<double>(w)}, {-1, -1, w}});
        g.edges.emplace_back(0, 1 + w);
    }

    g.cs_node_by_charger.resize(n);
    for (int i = 0; i < n; ++i) {
        const int w = scenario.charger_group[i];
        g.cs_node_by_charger[i] = g.size();
        g.nodes.push_back({NodeKind::CS,
                           {scenario.charger_max_charge_kw[i], scenario.charger_max_discharge_kw[i], static_cast<double>(i)},
                           {-1, i, w}});
        g.edges.emplace_back(1 + w, g.cs_node_by_charger[i]);
    }

    g.ev_node_by_charger.assign(n, -1);
    for (int i = 0; i < n; ++i) {
        const int k = state.connected[i];
        if (k < 0) continue;
        const auto& s = scenario.sessions[k];
        const int idx = g.size();
        g.ev_node_by_charger[i] = idx;
        g.nodes.push_back({NodeKind::EV,
                           {state.battery_energy[i] / s.e_max, static_cast<double>(s.t_departure - state.t),
                            static_cast<double>(s.ordinal), static_cast<double>(i), static_cast<double>(s.group_id)},
                           {s.ordinal, i, s.group_id}});
        g.edges.emplace_back(g.cs_node_by_charger[i], idx);
    }
    return g;
}

ActionGraph build_action_graph(const StateGraph& sg, std::span<const double> action) {
    if (static_cast<int>(action.size()) != sg.num_chargers) {
        throw ConfigError("action length does not match the state graph's charger count");
    }
    ActionGraph ag;
    ag.num_chargers = sg.num_chargers;
    ag.num_groups = sg.num_groups;
    for (int i = 0; i < sg.num_chargers; ++i) {
        const int ev = sg.ev_node_by_charger[i];
        if (ev < 0) continue;
        const auto& ids = sg.nodes[ev].ids;
        ag.nodes.push_back({NodeKind::EV_ACTION, {action[i], static_cast<double>(ids.i), static_cast<double>(ids.w)}, ids});
        ag.state_node_ref.push_back(ev);
    }
    for (int a = 0; a < ag.size(); ++a) {
        for (int b = a + 1; b < ag.size(); ++b) {
            if (ag.nodes[a].ids.w == ag.nodes[b].ids.w) ag.edges.emplace_back(a, b);
        }
    }
    return ag;
}

ActionGraph build_action_graph(const SimState& state, const Scenario& scenario, std::span<const double> action) {
    return build_action_graph(build_state_graph(state, scenario), action);
}

namespace {

std::vector<double> degrees_with_self_loops(const Graph& g) {
    std::vector<double> deg(g.size(), 1.0);
    for (auto [a, b] : g.edges) {
        if (a == b) continue;
        deg[a] += 1.0;
        deg[b] += 1.0;
    }
    return deg;
}

void check_edges(const Graph& g) {
    for (auto [a, b] : g.edges) {
        if (a < 0 || b < 0 || a >= g.size() || b >= g.size()) throw ConfigError("edge endpoint out of range");
    }
}

}  // namespace

std::vector<double> normalized_adjacency(const Graph& g) {
    check_edges(g);
    const int n = g.size();
    std::vector<double> deg = degrees_with_self_loops(g);
    std::vector<double> m(static_cast<std::size_t>(n) * n, 0.0);
    for (int a = 0; a < n; ++a) m[static_cast<std::size_t>(a) * n + a] = 1.0 / deg[a];
    for (auto [a, b] : g.edges) {
        if (a == b) continue;
        double v = 1.0 / std::sqrt(deg[a] * deg[b]);
        m[static_cast<std::size_t>(a) * n + b] += v;
        m[static_cast<std::size_t>(b) * n + a] += v;
    }
    return m;
}

CsrMatrix normalized_adjacency_csr(const Graph& g) {
    check_edges(g);
    const int n = g.size();
    std::vector<double> deg = degrees_with_self_loops(g);
    std::vector<std::vector<std::pair<int, double>>> rows(n);
    for (int a = 0; a < n; ++a) rows[a].emplace_back(a, 1.0 / deg[a]);
    for (auto [a, b] : g.edges) {
        if (a == b) continue;
        double v = 1.0 / std::sqrt(deg[a] * deg[b]);
        rows[a].emplace_back(b, v);
        rows[b].emplace_back(a, v);
    }
    CsrMatrix csr;
    csr.rows = n;
    csr.row_ptr.push_back(0);
    for (auto& r : rows) {
        std::sort(r.begin(), r.end());
        // merge duplicate edges so the CSR matches the dense accumulation
        for (std::size_t k = 0; k < r.size(); ++k) {
            if (!csr.col.empty() && static_cast<int>(csr.col.size()) > csr.row_ptr.back() && csr.col.back() == r[k].first) {
                csr.val.back() += r[k].second;
            } else {
                csr.col.push_back(r[k].first);
                csr.val.push_back(r[k].second);
            }
        }
        csr.row_ptr.push_back(static_cast<int>(csr.col.size()));
    }
    return csr;
}

std::vector<int> invert_permutation(std::span<const int> p) {
    std::vector<int> inv(p.size(), -1);
    for (std::size_t k = 0; k < p.size(); ++k) {
        if (p[k] < 0 || p[k] >= static_cast<int>(p.size()) || inv[p[k]] != -1) {
            throw ConfigError("permutation is not a bijection on node indices");
        }
        inv[p[k]] = static_cast<int>(k);
    }
    return inv;
}

namespace {

void permute_base(const Graph& in, std::span<const int> p, Graph& out) {
    if (static_cast<int>(p.size()) != in.size()) throw ConfigError("permutation length != node count");
    std::vector<int> inv = invert_permutation(p);
    out.num_chargers = in.num_chargers;
    out.num_groups = in.num_groups;
    out.nodes.resize(in.nodes.size());
    for (std::size_t k = 0; k < inv.size(); ++k) out.nodes[k] = in.nodes[inv[k]];
    out.edges.clear();
    for (auto [a, b] : in.edges) out.edges.emplace_back(p[a], p[b]);
}

}  // namespace

StateGraph permute_graph(const StateGraph& g, std::span<const int> p) {
    StateGraph out;
    permute_base(g, p, out);
    out.ev_node_by_charger = g.ev_node_by_charger;
    for (int& v : out.ev_node_by_charger) v = v < 0 ? -1 : p[v];
    out.cs_node_by_charger = g.cs_node_by_charger;
    for (int& v : out.cs_node_by_charger) v = p[v];
    return out;
}

ActionGraph permute_graph(const ActionGraph& g, std::span<const int> p) {
    ActionGraph out;
    permute_base(g, p, out);
    std::vector<int> inv = invert_permutation(p);
    out.state_node_ref.resize(g.state_node_ref.size());
    for (std::size_t k = 0; k < inv.size(); ++k) out.state_node_ref[k] = g.state_node_ref[inv[k]];
    return out;
}

nlohmann::json to_json(const Graph& g) {
    nlohmann::json kinds = nlohmann::json::array();
    nlohmann::json feats = nlohmann::json::array();
    nlohmann::json ids = nlohmann::json::array();
    for (const auto& node : g.nodes) {
        kinds.push_back(to_string(node.kind));
        feats.push_back(node.features);
        ids.push_back({node.ids.j, node.ids.i, node.ids.w});
    }
    nlohmann::json edges = nlohmann::json::array();
    for (auto [a, b] : g.edges) edges.push_back({a, b});
    return {{"kinds", kinds}, {"features", feats}, {"ids", ids}, {"edges", edges},
            {"num_chargers", g.num_chargers}, {"num_groups", g.num_groups}};
}

void graph_from_json(const nlohmann::json& j, Graph& g) {
    const auto& kinds = j.at("kinds");
    const auto& feats = j.at("features");
    const auto& ids = j.at("ids");
    if (kinds.size() != feats.size() || kinds.size() != ids.size()) throw ConfigError("graph arrays disagree in length");
    g.nodes.clear();
    for (std::size_t k = 0; k < kinds.size(); ++k) {
        GraphNode node;
        node.kind = parse_node_kind(kinds[k].get<std::string>());
        node.features = feats[k].get<std::vector<double>>();
        if (static_cast<int>(node.features.size()) != feature_width(node.kind)) {
            throw ConfigError("node feature width does not match its kind");
        }
        auto v = ids[k].get<std::array<int, 3>>();
        node.ids = {v[0], v[1], v[2]};
        g.nodes.push_back(std::move(node));
    }
    g.edges.clear();
    for (const auto& e : j.at("edges")) g.edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    g.num_chargers = j.at("num_chargers").get<int>();
    g.num_groups = j.at("num_groups").get<int>();
    check_edges(g);
}

nlohmann::json to_json(const StateGraph& g) { return to_json(static_cast<const Graph&>(g)); }

StateGraph state_graph_from_json(const nlohmann::json& j) {
    StateGraph g;
    graph_from_json(j, g);
    g.ev_node_by_charger.assign(g.num_chargers, -1);
    g.cs_node_by_charger.assign(g.num_chargers, -1);
    for (int k = 0; k < g.size(); ++k) {
        const auto& node = g.nodes[k];
        if (node.ids.i < 0 || node.ids.i >= g.num_chargers) continue;
        if (node.kind == NodeKind::EV) g.ev_node_by_charger[node.ids.i] = k;
        if (node.kind == NodeKind::CS) g.cs_node_by_charger[node.ids.i] = k;
    }
    return g;
}

}  // namespace gnndt
