// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "gnndt/data/trajectory.hpp"

namespace gnndt::eval {

struct Metrics {
    double energy_charged_kwh = 0.0;
    double energy_discharged_kwh = 0.0;
    double satisfaction_pct = 100.0;  // 100 when nobody departed
    double violation_kw = 0.0;        // episode sum of per-step overflow
    double cost_eur = 0.0;            // revenue minus expense, so usually negative
    double reward = 0.0;
    double exec_s_per_step = 0.0;
};

/// Episode metrics of a completed trajectory. `exec_s_per_step` is left at 0 for the caller.
Metrics compute_metrics(const Trajectory& trajectory);

struct MetricsRow {
    std::string algorithm;
    std::uint64_t scenario_seed = 0;
    Metrics metrics;
};

inline constexpr const char* kMetricsHeader =
    "algorithm,scenario_seed,energy_charged_kwh,energy_discharged_kwh,satisfaction_pct,violation_kw,cost_eur,reward,"
    "exec_s_per_step";

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows);
void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);

}  // namespace gnndt::eval
