// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gnndt/env/sim.hpp"

namespace gnndt {

enum class NodeKind : std::uint8_t { EV = 0, CS = 1, TR = 2, CPO = 3, EV_ACTION = 4 };

inline constexpr int kNumNodeKinds = 5;

/// Raw feature width per kind: EV 5, CS 3, TR 2, CPO 5, EV_ACTION 3.
int feature_width(NodeKind kind);
std::string to_string(NodeKind kind);
NodeKind parse_node_kind(const std::string& name);

/// Entity ids carried by a node: session ordinal j, charger i, group w. -1 where not applicable.
struct EntityIds {
    int j = -1;
    int i = -1;
    int w = -1;
    bool operator==(const EntityIds&) const = default;
};

struct GraphNode {
    NodeKind kind = NodeKind::CPO;
    std::vector<double> features;
    EntityIds ids;
    bool operator==(const GraphNode&) const = default;
};

using Edge = std::pair<int, int>;

/// Typed-node graph shared by state and action graphs. Edges are undirected, stored once each.
struct Graph {
    std::vector<GraphNode> nodes;
    std::vector<Edge> edges;
    int num_chargers = 0;  // entity counts of the environment the graph was built from
    int num_groups = 0;

    int size() const { return static_cast<int>(nodes.size()); }
    bool operator==(const Graph&) const = default;
};

/// State graph: CPO root -> TR per group -> CS per charger -> EV per connected session.
struct StateGraph : Graph {
    std::vector<int> ev_node_by_charger;  // -1 when the charger is empty
    std::vector<int> cs_node_by_charger;
    bool operator==(const StateGraph&) const = default;
};

/// Action graph: one EV_ACTION node per connected EV, cliques within each transformer group.
struct ActionGraph : Graph {
    std::vector<int> state_node_ref;  // per action node: the EV node in the paired StateGraph
    bool operator==(const ActionGraph&) const = default;
};

/// Node order is CPO, TR by group, CS by charger, EV by charger.
/// EV features [SoC, t_departure - t, j, i, w]; CS [p_charge_max, p_discharge_max, i];
/// TR [group limit at t, w]; CPO [day/7, sin(2 pi h / P), cos(2 pi h / P), price_charge(t), p_sum(t-1)]
/// with h the step of day and P steps per day. Ids are raw integers; scaling is the model's job.
StateGraph build_state_graph(const SimState& state, const Scenario& scenario);

/// Action graph for `action` applied in `state`. Features [a_i, i, w].
ActionGraph build_action_graph(const StateGraph& state_graph, std::span<const double> action);
ActionGraph build_action_graph(const SimState& state, const Scenario& scenario, std::span<const double> action);

/// Dense row-major D^-1/2 (A + I) D^-1/2 of an n-node graph.
std::vector<double> normalized_adjacency(const Graph& graph);

/// Same matrix in CSR form (rows sorted by column), used by the GCN kernels.
struct CsrMatrix {
    int rows = 0;
    std::vector<int> row_ptr;
    std::vector<int> col;
    std::vector<double> val;
};
CsrMatrix normalized_adjacency_csr(const Graph& graph);

/// `permutation[k]` is the new index of old node k. Throws ConfigError unless it is a bijection.
StateGraph permute_graph(const StateGraph& graph, std::span<const int> permutation);
ActionGraph permute_graph(const ActionGraph& graph, std::span<const int> permutation);
std::vector<int> invert_permutation(std::span<const int> permutation);

nlohmann::json to_json(const Graph& graph);
void graph_from_json(const nlohmann::json& j, Graph& graph);
nlohmann::json to_json(const StateGraph& graph);
StateGraph state_graph_from_json(const nlohmann::json& j);

}  // namespace gnndt
