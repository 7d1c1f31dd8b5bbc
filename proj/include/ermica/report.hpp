#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ermica/harness.hpp"

namespace ermica {

/// results.csv header, in column order.
inline constexpr const char* kResultsCsvHeader =
    "method,task_type,d,k,seed,label_score,mcc,ica_converged,wall_time_s";

std::string results_csv(const ResultsTable& table, bool with_wall_time);
nlohmann::json results_json(const ResultsTable& table, bool with_wall_time);
ResultsTable results_from_json(const nlohmann::json& j);

/// Two-panel grouped bar chart for one (task_type, d): label score vs k on
/// the left, MCC vs k on the right, one bar per method with std error bars.
std::string render_chart_svg(const std::vector<Aggregate>& aggregates, TaskType task, std::size_t d);

/// Writes results.csv, results.json and chart_<task>_d<d>.svg files; returns
/// the paths written. Throws std::invalid_argument on an empty table.
std::vector<std::filesystem::path> emit_report(const ResultsTable& table,
                                               const std::filesystem::path& outdir,
                                               bool with_wall_time = false);

}  // namespace ermica
