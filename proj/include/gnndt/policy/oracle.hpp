// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "gnndt/env/sim.hpp"

namespace gnndt {

/// Finite action grid searched by the oracle. Must contain 0, be sorted, and lie in [-1, 1].
struct DiscretizationSpec {
    std::vector<double> levels{-1.0, -0.5, 0.0, 0.5, 1.0};
    void validate() const;
};

enum class OracleMode { exhaustive, branch_and_bound };

struct OracleOptions {
    double max_exhaustive_leaves = 5e7;  // cap on levels^(sum of per-step occupancy)
    double time_budget_s = 30.0;         // branch_and_bound only
    std::uint64_t node_budget = 0;       // branch_and_bound only, 0 = unlimited; deterministic unlike the clock
    int warm_start_passes = 8;           // coordinate-descent passes seeding the incumbent
};

struct OracleSolution {
    std::vector<std::vector<double>> actions;  // horizon x num_chargers, 0 where no EV is connected
    double objective = 0.0;                    // episode reward under exact env dynamics
    std::uint64_t node_count = 0;              // env transitions evaluated by the search
    bool proven_optimal = false;               // false when the time budget cut the search
    double warm_start_objective = 0.0;
};

/// Searches plans over the grid maximizing episode reward with full knowledge of the scenario.
/// exhaustive: plain depth-first enumeration; throws RuntimeFailure above the leaf cap.
/// branch_and_bound: same enumeration, pruned by partial reward plus an admissible optimistic bound
/// (zero violation, per-session continuous relaxation of energy value and departure penalty),
/// seeded by a coordinate-descent incumbent. On timeout the incumbent is returned unproven.
OracleSolution oracle_solve(const Scenario& scenario, const DiscretizationSpec& spec, OracleMode mode,
                            const OracleOptions& options = {});

/// Episode reward of a plan replayed through the environment (summed in step order).
double replay_objective(const Scenario& scenario, const std::vector<std::vector<double>>& actions);

/// log of the exhaustive leaf count: sum over steps of occupancy * log(levels).
double log_search_size(const Scenario& scenario, const DiscretizationSpec& spec);

/// Upper bound on what a session can still add to the reward from step `t` with energy `e`,
/// ignoring the other chargers, the setpoint penalty, and intermediate battery bounds.
double session_value_bound(const Scenario& scenario, const ChargingSession& session, int t, double e);

nlohmann::json to_json(const OracleSolution& solution);

}  // namespace gnndt
