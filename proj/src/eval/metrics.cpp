// SPDX-License-Identifier: Apache-2.0
#include "gnndt/eval/metrics.hpp"

#include <cstdio>
#include <fstream>

#include "gnndt/error.hpp"

namespace gnndt::eval {

Metrics compute_metrics(const Trajectory& tr) {
    Metrics m;
    double sat = 0.0;
    int departed = 0;
    for (const auto& st : tr.steps) {
        for (double p : st.applied_kw) {
            if (p > 0.0) {
                m.energy_charged_kwh += p * tr.dt_hours;
                m.cost_eur -= tr.dt_hours * st.price_charge * p;
            } else if (p < 0.0) {
                m.energy_discharged_kwh -= p * tr.dt_hours;
                m.cost_eur += tr.dt_hours * st.price_discharge * -p;
            }
        }
        m.violation_kw += st.breakdown.violation_kw;
        for (const auto& d : st.departures) {
            sat += d.target_kwh > 0.0 ? 100.0 * d.energy_kwh / d.target_kwh : 100.0;
            ++departed;
        }
        m.reward += st.reward;
    }
    if (departed > 0) m.satisfaction_pct = sat / departed;
    return m;
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

}  // namespace

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
    out << kMetricsHeader << '\n';
    for (const auto& r : rows) {
        const auto& m = r.metrics;
        out << r.algorithm << ',' << r.scenario_seed << ',' << fmt(m.energy_charged_kwh) << ','
            << fmt(m.energy_discharged_kwh) << ',' << fmt(m.satisfaction_pct) << ',' << fmt(m.violation_kw) << ','
            << fmt(m.cost_eur) << ',' << fmt(m.reward) << ',' << fmt(m.exec_s_per_step) << '\n';
    }
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw RuntimeFailure("cannot write " + path);
    write_metrics_csv(out, rows);
}

}  // namespace gnndt::eval
