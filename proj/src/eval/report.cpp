// SPDX-License-Identifier: Apache-2.0
#include "gnndt/eval/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include "gnndt/error.hpp"

namespace gnndt::eval {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

// cell labels may contain commas or quotes
std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q += '"';
        q += c;
    }
    return q + '"';
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out(1);
    bool in_q = false;
    for (std::size_t k = 0; k < line.size(); ++k) {
        const char c = line[k];
        if (in_q) {
            if (c == '"' && k + 1 < line.size() && line[k + 1] == '"') {
                out.back() += '"';
                ++k;
            } else if (c == '"') {
                in_q = false;
            } else {
                out.back() += c;
            }
        } else if (c == '"') {
            in_q = true;
        } else if (c == ',') {
            out.emplace_back();
        } else {
            out.back() += c;
        }
    }
    return out;
}

auto cell_key(const CellResult& c) { return std::tie(c.grid, c.order, c.cell, c.seed); }

}  // namespace

std::vector<SummaryRow> summarize(const std::vector<CellResult>& cells) {
    std::map<std::tuple<std::string, int, std::string>, std::vector<const CellResult*>> groups;
    for (const auto& c : cells) groups[{c.grid, c.order, c.cell}].push_back(&c);
    std::vector<SummaryRow> rows;
    for (auto& [key, members] : groups) {
        std::sort(members.begin(), members.end(), [](auto* a, auto* b) { return a->seed < b->seed; });
        SummaryRow r;
        std::tie(r.grid, r.order, r.cell) = key;
        double sum = 0.0;
        for (const auto* c : members) {
            if (c->failed) {
                ++r.failed;
                continue;
            }
            ++r.n;
            sum += c->reward;
        }
        if (r.n > 0) r.mean = sum / r.n;
        if (r.n > 1) {
            double ss = 0.0;
            for (const auto* c : members)
                if (!c->failed) ss += (c->reward - r.mean) * (c->reward - r.mean);
            r.std = std::sqrt(ss / (r.n - 1));
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_cells_csv(std::ostream& out, std::vector<CellResult> cells) {
    std::sort(cells.begin(), cells.end(), [](const auto& a, const auto& b) { return cell_key(a) < cell_key(b); });
    out << kCellsHeader << '\n';
    for (const auto& c : cells)
        out << quote(c.grid) << ',' << quote(c.cell) << ',' << c.order << ',' << c.seed << ','
            << (c.failed ? std::string("nan") : fmt(c.reward)) << ',' << (c.failed ? 1 : 0) << '\n';
}

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
    out << kSummaryHeader << '\n';
    for (const auto& r : rows)
        out << quote(r.grid) << ',' << quote(r.cell) << ',' << r.n << ',' << r.failed << ',' << fmt(r.mean) << ','
            << fmt(r.std) << '\n';
}

std::string summary_table(const std::vector<SummaryRow>& rows) {
    std::size_t w = 4;
    for (const auto& r : rows) w = std::max(w, r.cell.size());
    std::ostringstream out;
    std::string grid;
    bool first = true;
    for (const auto& r : rows) {
        if (first || r.grid != grid) {
            if (!first) out << '\n';
            grid = r.grid;
            first = false;
            out << "[" << grid << "]\n";
        }
        char buf[160];
        std::snprintf(buf, sizeof(buf), "  %-*s  %14.2f +/- %-12.2f n=%d", static_cast<int>(w), r.cell.c_str(), r.mean,
                      r.std, r.n);
        out << buf;
        if (r.failed > 0) out << " failed=" << r.failed;
        out << '\n';
    }
    return out.str();
}

nlohmann::json summary_json(const std::vector<SummaryRow>& rows) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows)
        j.push_back({{"grid", r.grid}, {"cell", r.cell}, {"n", r.n}, {"failed", r.failed}, {"mean", r.mean},
                     {"std", r.std}});
    return j;
}

std::vector<CellResult> read_cells_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != kCellsHeader) throw ConfigError(path + ": not a cells table");
    std::vector<CellResult> cells;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() != 6) throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 6 fields");
        try {
            CellResult c;
            c.grid = f[0];
            c.cell = f[1];
            c.order = std::stoi(f[2]);
            c.seed = std::stoull(f[3]);
            c.failed = f[5] == "1";
            c.reward = c.failed ? 0.0 : std::stod(f[4]);
            cells.push_back(std::move(c));
        } catch (const std::logic_error&) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": bad number");
        }
    }
    return cells;
}

void write_report(const std::string& dir, const std::vector<CellResult>& cells) {
    std::filesystem::create_directories(dir);
    const auto rows = summarize(cells);
    auto open = [&](const std::string& name) {
        std::ofstream f(dir + "/" + name, std::ios::trunc);
        if (!f) throw RuntimeFailure("cannot write " + dir + "/" + name);
        return f;
    };
    {
        auto f = open("cells.csv");
        write_cells_csv(f, cells);
    }
    {
        auto f = open("summary.csv");
        write_summary_csv(f, rows);
    }
    {
        auto f = open("summary.txt");
        f << summary_table(rows);
    }
    {
        auto f = open("summary.json");
        f << summary_json(rows).dump(2) << '\n';
    }
}

}  // namespace gnndt::eval
