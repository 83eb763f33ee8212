#include "kcprobe/report.h"

#include <cstdio>
#include <filesystem>

#include "kcprobe/error.h"
#include "kcprobe/io.h"
#include "kcprobe/text.h"

namespace kcp {

using nlohmann::json;

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  return "\"" + replace_all(field, "\"", "\"\"") + "\"";
}

std::string format_number(const std::optional<double>& v) {
  if (!v) return {};
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string row_line(std::vector<std::string> cells) {
  for (auto& c : cells) c = csv_escape(c);
  return join(cells, ",") + "\n";
}

struct Metric {
  const char* name;
  std::optional<double> value;
  std::size_t count;
};

std::vector<Metric> metrics_of(const ReportRow& r) {
  const auto inconsistent = r.counts.inconsistent();
  return {{"consistency", r.consistency, r.counts.scored()},
          {"abstention_rate", r.abstention_rate, inconsistent},
          {"variation_rate", r.variation_rate, inconsistent},
          {"mean_confidence", r.mean_confidence, r.confidence_count},
          {"failed", static_cast<double>(r.counts.failed), r.counts.total}};
}

}  // namespace

std::string table_csv(const ReportTable& table) {
  std::vector<std::string> header = table.group_by;
  for (const char* c : {"sessions", "failed", "scored", "consistent", "abstention", "variation", "consistency",
                        "abstention_rate", "variation_rate", "mean_confidence"}) {
    header.push_back(c);
  }
  std::string out = row_line(header);
  for (const auto& r : table.rows) {
    std::vector<std::string> cells = r.key;
    for (const auto n : {r.counts.total, r.counts.failed, r.counts.scored(), r.counts.consistent,
                         r.counts.abstention, r.counts.variation}) {
      cells.push_back(std::to_string(n));
    }
    for (const auto& v : {r.consistency, r.abstention_rate, r.variation_rate, r.mean_confidence}) {
      cells.push_back(format_number(v));
    }
    out += row_line(cells);
  }
  return out;
}

std::string table_tidy_csv(const ReportTable& table) {
  std::vector<std::string> header = table.group_by;
  header.insert(header.end(), {"metric", "value", "count"});
  std::string out = row_line(header);
  for (const auto& r : table.rows) {
    for (const auto& m : metrics_of(r)) {
      std::vector<std::string> cells = r.key;
      cells.insert(cells.end(), {m.name, format_number(m.value), std::to_string(m.count)});
      out += row_line(cells);
    }
  }
  return out;
}

json table_json(const ReportTable& table) {
  json rows = json::array();
  for (const auto& r : table.rows) {
    json key = json::object();
    for (std::size_t i = 0; i < table.group_by.size(); ++i) key[table.group_by[i]] = r.key[i];
    rows.push_back(json{{"key", key},
                        {"macro", r.macro},
                        {"sessions", r.counts.total},
                        {"failed", r.counts.failed},
                        {"scored", r.counts.scored()},
                        {"consistent", r.counts.consistent},
                        {"abstention", r.counts.abstention},
                        {"variation", r.counts.variation},
                        {"consistency", opt(r.consistency)},
                        {"abstention_rate", opt(r.abstention_rate)},
                        {"variation_rate", opt(r.variation_rate)},
                        {"mean_confidence", opt(r.mean_confidence)}});
  }
  return json{{"group_by", table.group_by}, {"rows", rows}};
}

std::string bins_tidy_csv(const std::vector<BinRow>& rows) {
  std::string out = row_line({"bin_lo", "bin_hi", "metric", "value", "count"});
  for (const auto& r : rows) {
    out += row_line({format_number(r.lo), format_number(r.hi), "conforming_ratio", format_number(r.ratio),
                     std::to_string(r.count)});
  }
  return out;
}

json bins_json(const std::vector<BinRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    out.push_back(json{{"lo", r.lo}, {"hi", r.hi}, {"count", r.count}, {"conforming", r.conforming},
                       {"ratio", opt(r.ratio)}});
  }
  return out;
}

std::string deltas_tidy_csv(const std::vector<std::pair<std::vector<std::string>, DeltaSummary>>& summaries,
                            const std::vector<std::string>& group_columns) {
  std::vector<std::string> header = group_columns;
  header.insert(header.end(), {"metric", "value", "count"});
  std::string out = row_line(header);
  for (const auto& [key, d] : summaries) {
    auto emit = [&](const std::string& metric, const std::optional<double>& v, std::size_t n) {
      std::vector<std::string> cells = key;
      cells.insert(cells.end(), {metric, format_number(v), std::to_string(n)});
      out += row_line(cells);
    };
    emit("mean_delta", d.mean, d.count);
    emit("fraction_positive", d.fraction_positive, d.count);
    emit("unpaired", static_cast<double>(d.unpaired), d.unpaired);
    for (std::size_t i = 0; i < d.histogram.size(); ++i) {
      const auto share = d.count ? std::optional<double>(static_cast<double>(d.histogram[i]) / static_cast<double>(d.count))
                                 : std::nullopt;
      emit("hist[" + format_number(d.histogram_edges[i]) + "," + format_number(d.histogram_edges[i + 1]) + ")",
           share, d.histogram[i]);
    }
  }
  return out;
}

namespace {

json delta_json(const DeltaSummary& d) {
  return json{{"count", d.count},
              {"unpaired", d.unpaired},
              {"mean", opt(d.mean)},
              {"fraction_positive", opt(d.fraction_positive)},
              {"histogram_edges", d.histogram_edges},
              {"histogram", d.histogram}};
}

struct TableSpec {
  const char* stem;
  std::vector<std::string> group_by;
};

const std::vector<TableSpec>& table_specs() {
  static const std::vector<TableSpec> kSpecs{
      {"table_overall", {"model"}},
      {"table_structure", {"structure"}},
      {"table_method_degree", {"method", "degree", "structure"}},
      {"table_format", {"format", "structure"}},
      {"table_position", {"structure", "position"}},
      {"table_position_method", {"structure", "position", "method"}},
      {"table_ablation", {"ablation", "structure"}},
  };
  return kSpecs;
}

}  // namespace

const std::vector<std::string>& standard_report_files() {
  static const std::vector<std::string> kFiles = [] {
    std::vector<std::string> f;
    for (const auto& s : table_specs()) {
      f.push_back(std::string(s.stem) + ".csv");
      f.push_back(std::string(s.stem) + ".json");
      f.push_back(std::string(s.stem) + "_tidy.csv");
    }
    for (const char* extra : {"fig_conforming_by_confidence.csv", "fig_conforming_by_confidence_all_hops.csv",
                              "fig_confidence_change.csv", "fig_confidence_change_format.csv",
                              "ttest_degree.csv", "report.json"}) {
      f.push_back(extra);
    }
    return f;
  }();
  return kFiles;
}

void write_table(const ReportTable& table, const std::string& stem) {
  write_file(stem + ".csv", table_csv(table));
  write_file(stem + ".json", table_json(table).dump(2) + "\n");
  write_file(stem + "_tidy.csv", table_tidy_csv(table));
}

json write_reports(std::span<const ProbeSession> sessions, const std::map<std::string, double>& baseline,
                   const std::string& dir, const Bins& bins) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto path = [&](const std::string& name) { return (fs::path(dir) / name).string(); };
  json doc = json::object();

  const auto counts = count_outcomes(sessions);
  std::size_t baselines = 0;
  for (const auto& s : sessions) baselines += s.baseline() ? 1 : 0;
  doc["sessions"] = counts.total;
  doc["baseline_sessions"] = baselines;
  doc["failed_sessions"] = counts.failed;

  json tables = json::object();
  for (const auto& spec : table_specs()) {
    const auto t = aggregate_report(sessions, spec.group_by);
    write_table(t, path(spec.stem));
    tables[spec.stem] = table_json(t);
  }
  doc["tables"] = tables;

  const auto distracted_bins = conforming_ratio_by_confidence(sessions, baseline, bins, HopSelection::kDistractedHop);
  const auto all_bins = conforming_ratio_by_confidence(sessions, baseline, bins, HopSelection::kAllPkgHops);
  write_file(path("fig_conforming_by_confidence.csv"), bins_tidy_csv(distracted_bins));
  write_file(path("fig_conforming_by_confidence_all_hops.csv"), bins_tidy_csv(all_bins));
  doc["conforming_by_confidence"] = bins_json(distracted_bins);
  doc["conforming_by_confidence_all_hops"] = bins_json(all_bins);

  std::vector<ProbeSession> base_sessions;
  for (const auto& s : sessions) {
    if (s.baseline()) base_sessions.push_back(s);
  }
  std::vector<std::pair<std::vector<std::string>, DeltaSummary>> change, change_format;
  json change_json = json::object();
  json change_format_json = json::object();
  for (const auto partition : {HopClass::kConforming, HopClass::kDeviated}) {
    const auto d = confidence_change(sessions, base_sessions, partition);
    change.push_back({{to_string(partition)}, d});
    change_json[to_string(partition)] = delta_json(d);
    for (const auto format : {Format::kSingleSentence, Format::kParagraph}) {
      std::vector<ProbeSession> subset;
      for (const auto& s : sessions) {
        if (!s.baseline() && s.format == to_string(format)) subset.push_back(s);
      }
      const auto df = confidence_change(subset, base_sessions, partition);
      change_format.push_back({{to_string(format), to_string(partition)}, df});
      change_format_json[to_string(format)][to_string(partition)] = delta_json(df);
    }
  }
  write_file(path("fig_confidence_change.csv"), deltas_tidy_csv(change, {"partition"}));
  write_file(path("fig_confidence_change_format.csv"), deltas_tidy_csv(change_format, {"format", "partition"}));
  doc["confidence_change"] = change_json;
  doc["confidence_change_format"] = change_format_json;

  std::string ttest_csv = "comparison,n,mean_difference,t,df,p_value\n";
  try {
    const auto t = degree_t_test(sessions);
    ttest_csv += "TypeShift-TypeMatch," + std::to_string(t.n) + "," + format_number(t.mean_difference) + "," +
                 format_number(t.t) + "," + std::to_string(t.df) + "," + format_number(t.p_value) + "\n";
    doc["ttest_degree"] = json{{"n", t.n}, {"mean_difference", t.mean_difference}, {"t", t.t}, {"df", t.df},
                               {"p_value", t.p_value}};
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kUndefinedMetric) throw;
    ttest_csv += "TypeShift-TypeMatch,0,,,,\n";
    doc["ttest_degree"] = nullptr;
  }
  write_file(path("ttest_degree.csv"), ttest_csv);
  write_file(path("report.json"), doc.dump(2) + "\n");
  return doc;
}

}  // namespace kcp
