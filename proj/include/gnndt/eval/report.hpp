// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

namespace gnndt::eval {

/// One (grid cell, seed) outcome. `order` fixes the row position of the cell inside its grid.
struct CellResult {
    std::string grid;
    std::string cell;
    int order = 0;
    std::uint64_t seed = 0;
    double reward = 0.0;
    bool failed = false;
};

struct SummaryRow {
    std::string grid;
    std::string cell;
    int order = 0;
    int n = 0;       // successful seeds
    int failed = 0;
    double mean = 0.0;
    double std = 0.0;  // sample std (n - 1), 0 below two seeds
};

/// Groups by (grid, cell) and sorts by (grid, order, cell) regardless of input order.
std::vector<SummaryRow> summarize(const std::vector<CellResult>& cells);

inline constexpr const char* kCellsHeader = "grid,cell,order,seed,reward,failed";
inline constexpr const char* kSummaryHeader = "grid,cell,n,failed,mean_reward,std_reward";

void write_cells_csv(std::ostream& out, std::vector<CellResult> cells);
void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows);
/// Aligned plain-text table, one block per grid.
std::string summary_table(const std::vector<SummaryRow>& rows);
nlohmann::json summary_json(const std::vector<SummaryRow>& rows);

/// Parses a file written by write_cells_csv. Throws ConfigError on a missing file or bad header.
std::vector<CellResult> read_cells_csv(const std::string& path);

/// Writes cells.csv, summary.csv, summary.txt and summary.json into `dir`.
void write_report(const std::string& dir, const std::vector<CellResult>& cells);

}  // namespace gnndt::eval
