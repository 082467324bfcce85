// SPDX-License-Identifier: Apache-2.0
// gnndt: dataset generation, training, evaluation and experiment grids.
#include <omp.h>

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include "gnndt/error.hpp"
#include "gnndt/eval/experiments.hpp"
#include "gnndt/eval/report.hpp"

namespace fs = std::filesystem;
using namespace gnndt;

namespace {

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    try {
        return nlohmann::json::parse(in, nullptr, true, true);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    int threads = 1;
};

void run_verb(eval::ExperimentKind kind, const Common& c) {
    auto j = read_json(c.config);
    if (!j.is_object()) throw ConfigError(c.config + ": expected a JSON object");
    if (!j.contains("kind")) j["kind"] = eval::to_string(kind);
    auto spec = eval::experiment_spec_from_json(j, fs::path(c.config).parent_path().string());
    if (spec.kind != kind)
        throw ConfigError(c.config + " describes a '" + eval::to_string(spec.kind) + "' experiment, not '" +
                          eval::to_string(kind) + "'");
    if (!c.out.empty()) spec.out = c.out;
    if (c.seed) {
        switch (kind) {
            case eval::ExperimentKind::gen_data: spec.data.seed_base = *c.seed; break;
            case eval::ExperimentKind::train:
            case eval::ExperimentKind::eval: spec.train.seed = *c.seed; break;
            default:
                for (std::size_t k = 0; k < spec.seeds.size(); ++k) spec.seeds[k] = *c.seed + k;
        }
    }
    omp_set_num_threads(c.threads);
    eval::run_experiment(spec, c.threads, std::cout);
}

void run_report(const std::vector<std::string>& inputs, const std::string& out) {
    std::vector<eval::CellResult> cells;
    for (const auto& p : inputs) {
        const auto path = fs::is_directory(p) ? (fs::path(p) / "cells.csv").string() : p;
        auto more = eval::read_cells_csv(path);
        cells.insert(cells.end(), more.begin(), more.end());
    }
    if (!out.empty()) eval::write_report(out, cells);
    std::cout << eval::summary_table(eval::summarize(cells));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"GNN decision transformer for EV charging"};
    app.require_subcommand(1);

    const std::map<std::string, std::pair<eval::ExperimentKind, std::string>> verbs = {
        {"gen-data", {eval::ExperimentKind::gen_data, "record an offline dataset"}},
        {"train", {eval::ExperimentKind::train, "train one model and score it against the baselines"}},
        {"eval", {eval::ExperimentKind::eval, "evaluate a checkpoint and the baselines"}},
        {"ablate", {eval::ExperimentKind::ablate, "architecture ablation grid"}},
        {"sweep-k", {eval::ExperimentKind::k_sweep, "context length sweep"}},
        {"sweep-mix", {eval::ExperimentKind::mix_sweep, "oracle/random dataset mixing sweep"}},
        {"generalize", {eval::ExperimentKind::generalize, "score under distribution shifts"}},
        {"scale", {eval::ExperimentKind::scale, "score on other charger counts"}},
    };
    Common common;
    std::uint64_t seed = 0;
    std::map<std::string, CLI::App*> subs;
    for (const auto& [name, v] : verbs) {
        auto* sub = app.add_subcommand(name, v.second);
        sub->add_option("config", common.config, "experiment JSON")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "seed override");
        sub->add_option("--out", common.out, "output directory");
        sub->add_option("--threads", common.threads, "worker threads")->check(CLI::PositiveNumber);
        subs[name] = sub;
    }
    std::vector<std::string> inputs;
    std::string report_out;
    auto* report = app.add_subcommand("report", "summarize cells.csv files");
    report->add_option("inputs", inputs, "cells.csv files or experiment directories")->required();
    report->add_option("--out", report_out, "write summary files here");
    report->add_option("--threads", common.threads, "ignored")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (report->parsed()) {
            run_report(inputs, report_out);
            return 0;
        }
        for (const auto& [name, sub] : subs) {
            if (!sub->parsed()) continue;
            if (sub->count("--seed") > 0) common.seed = seed;
            run_verb(verbs.at(name).first, common);
        }
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << '\n';
        return 3;
    }
}
