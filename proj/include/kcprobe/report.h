#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "kcprobe/metrics.h"

namespace kcp {

std::string csv_escape(const std::string& field);
/// Fixed six-decimal rendering; empty for a missing value.
std::string format_number(const std::optional<double>& v);

std::string table_csv(const ReportTable& table);
/// Long form: group dims..., metric, value, count.
std::string table_tidy_csv(const ReportTable& table);
nlohmann::json table_json(const ReportTable& table);

std::string bins_tidy_csv(const std::vector<BinRow>& rows);
nlohmann::json bins_json(const std::vector<BinRow>& rows);

/// Long form with a leading `group` column per summary.
std::string deltas_tidy_csv(const std::vector<std::pair<std::vector<std::string>, DeltaSummary>>& summaries,
                            const std::vector<std::string>& group_columns);

/// Names of the files written by write_reports, relative to the directory.
const std::vector<std::string>& standard_report_files();

/// Writes every table and figure data file into `dir` and returns the
/// combined JSON document (also saved as report.json).
nlohmann::json write_reports(std::span<const ProbeSession> sessions,
                             const std::map<std::string, double>& baseline, const std::string& dir,
                             const Bins& bins = Bins::uniform());

/// One grouped table as CSV and JSON at `<stem>.csv` / `<stem>.json` plus a
/// tidy `<stem>_tidy.csv`.
void write_table(const ReportTable& table, const std::string& stem);

}  // namespace kcp
