#include "kcprobe/metrics.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <tuple>

#include <boost/math/distributions/students_t.hpp>

#include "kcprobe/error.h"

namespace kcp {

double confidence(std::span<const double> logprobs) {
  if (logprobs.empty()) throw Error(ErrorCode::kUndefinedMetric, "confidence of an empty token list");
  double sum = 0.0;
  for (const double lp : logprobs) {
    if (!(lp <= 0.0)) throw Error(ErrorCode::kInvalidArgument, "logprob must be <= 0");
    sum += lp;
  }
  return std::exp(sum);
}

OutcomeCounts count_outcomes(std::span<const ProbeSession> sessions) {
  OutcomeCounts c;
  for (const auto& s : sessions) {
    ++c.total;
    switch (s.final_status) {
      case FinalStatus::kFailed: ++c.failed; break;
      case FinalStatus::kConsistent: ++c.consistent; break;
      case FinalStatus::kAbstention: ++c.abstention; break;
      case FinalStatus::kVariation: ++c.variation; break;
    }
  }
  return c;
}

double consistency(std::span<const ProbeSession> sessions) {
  const auto c = count_outcomes(sessions);
  if (c.scored() == 0) throw Error(ErrorCode::kUndefinedMetric, "consistency over zero sessions");
  return static_cast<double>(c.consistent) / static_cast<double>(c.scored());
}

InconsistentSplit split_inconsistent(std::span<const ProbeSession> sessions) {
  const auto c = count_outcomes(sessions);
  InconsistentSplit out;
  out.inconsistent = c.inconsistent();
  if (out.inconsistent == 0) return out;
  out.abstention = static_cast<double>(c.abstention) / static_cast<double>(out.inconsistent);
  out.variation = static_cast<double>(c.variation) / static_cast<double>(out.inconsistent);
  return out;
}

Bins Bins::uniform(double width) {
  if (!(width > 0.0) || width > 1.0) throw Error(ErrorCode::kInvalidArgument, "bin width must be in (0, 1]");
  Bins b;
  const auto n = static_cast<std::size_t>(std::llround(1.0 / width));
  if (std::fabs(static_cast<double>(n) * width - 1.0) > 1e-9) {
    throw Error(ErrorCode::kInvalidArgument, "bin width must divide [0, 1] evenly");
  }
  for (std::size_t i = 0; i <= n; ++i) b.edges.push_back(static_cast<double>(i) / static_cast<double>(n));
  return b;
}

void Bins::validate() const {
  if (edges.size() < 2 || edges.front() != 0.0 || edges.back() != 1.0) {
    throw Error(ErrorCode::kInvalidArgument, "bins must partition [0, 1]");
  }
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i] > edges[i - 1])) throw Error(ErrorCode::kInvalidArgument, "bin edges must increase");
  }
}

std::size_t Bins::locate(double value) const {
  const auto it = std::upper_bound(edges.begin(), edges.end(), value);
  const auto idx = static_cast<std::size_t>(std::distance(edges.begin(), it));
  if (idx == 0) return 0;
  return std::min(idx - 1, size() - 1);
}

std::map<std::string, double> baseline_confidences(const Pkg& graph) {
  std::map<std::string, double> out;
  for (const auto& e : graph.edges()) {
    if (e.elicitation.confidence) out[relation_key(e.subjects, e.rule_id)] = *e.elicitation.confidence;
  }
  return out;
}

std::vector<BinRow> conforming_ratio_by_confidence(std::span<const ProbeSession> sessions,
                                                   const std::map<std::string, double>& baseline,
                                                   const Bins& bins, HopSelection selection) {
  bins.validate();
  std::vector<BinRow> rows(bins.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].lo = bins.edges[i];
    rows[i].hi = bins.edges[i + 1];
  }
  for (const auto& s : sessions) {
    if (s.baseline() || s.final_status == FinalStatus::kFailed) continue;
    for (const auto& h : s.hops) {
      if (!h.queried_pkg_relation) continue;
      if (selection == HopSelection::kDistractedHop && (!s.distracted_hop || h.hop_index != *s.distracted_hop)) {
        continue;
      }
      const auto it = baseline.find(h.relation_key);
      if (it == baseline.end()) continue;
      auto& row = rows[bins.locate(it->second)];
      ++row.count;
      if (h.classification == HopClass::kConforming) ++row.conforming;
    }
  }
  for (auto& r : rows) {
    if (r.count) r.ratio = static_cast<double>(r.conforming) / static_cast<double>(r.count);
  }
  return rows;
}

DeltaSummary summarize_deltas(std::vector<double> deltas, double histogram_width) {
  DeltaSummary d;
  const auto n = static_cast<std::size_t>(std::llround(2.0 / histogram_width));
  for (std::size_t i = 0; i <= n; ++i) {
    d.histogram_edges.push_back(-1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(n));
  }
  d.histogram.assign(n, 0);
  d.count = deltas.size();
  if (!deltas.empty()) {
    double sum = 0.0;
    std::size_t positive = 0;
    for (const double x : deltas) {
      sum += x;
      if (x > 0.0) ++positive;
      const auto it = std::upper_bound(d.histogram_edges.begin(), d.histogram_edges.end(), x);
      auto idx = static_cast<std::ptrdiff_t>(std::distance(d.histogram_edges.begin(), it)) - 1;
      idx = std::clamp<std::ptrdiff_t>(idx, 0, static_cast<std::ptrdiff_t>(n) - 1);
      ++d.histogram[static_cast<std::size_t>(idx)];
    }
    d.mean = sum / static_cast<double>(deltas.size());
    d.fraction_positive = static_cast<double>(positive) / static_cast<double>(deltas.size());
  }
  d.deltas = std::move(deltas);
  return d;
}

DeltaSummary confidence_change(std::span<const ProbeSession> distracted,
                               std::span<const ProbeSession> baselines, HopClass partition,
                               double histogram_width) {
  using Key = std::tuple<std::string, int, Ablation, std::string>;
  std::map<Key, double> base;
  for (const auto& s : baselines) {
    if (!s.baseline()) continue;
    for (const auto& h : s.hops) {
      if (h.confidence) base[{s.chain_id, h.hop_index, s.ablation, s.model_id}] = *h.confidence;
    }
  }
  std::vector<double> deltas;
  std::size_t unpaired = 0;
  for (const auto& s : distracted) {
    if (s.baseline() || s.final_status == FinalStatus::kFailed) continue;
    for (const auto& h : s.hops) {
      if (h.classification != partition || !h.confidence) continue;
      const auto it = base.find({s.chain_id, h.hop_index, s.ablation, s.model_id});
      if (it == base.end()) {
        ++unpaired;
        continue;
      }
      deltas.push_back(*h.confidence - it->second);
    }
  }
  auto d = summarize_deltas(std::move(deltas), histogram_width);
  d.unpaired = unpaired;
  return d;
}

std::string dimension_value(const ProbeSession& s, const std::string& dimension) {
  if (dimension == "method") return s.method;
  if (dimension == "degree") return s.degree;
  if (dimension == "position") return s.position;
  if (dimension == "format") return s.format;
  if (dimension == "structure") return s.chain_kind;
  if (dimension == "model") return s.model_id;
  if (dimension == "ablation") return to_string(s.ablation);
  throw Error(ErrorCode::kConfigError, "unknown group-by dimension '" + dimension + "'");
}

std::optional<double> macro_average(std::span<const double> values) {
  if (values.empty()) return std::nullopt;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

namespace {

ReportRow make_row(std::vector<std::string> key, std::span<const ProbeSession> group) {
  ReportRow row;
  row.key = std::move(key);
  row.counts = count_outcomes(group);
  if (row.counts.scored()) {
    row.consistency = static_cast<double>(row.counts.consistent) / static_cast<double>(row.counts.scored());
  }
  const auto split = split_inconsistent(group);
  row.abstention_rate = split.abstention;
  row.variation_rate = split.variation;
  double sum = 0.0;
  for (const auto& s : group) {
    if (s.final_status == FinalStatus::kFailed) continue;
    for (const auto& h : s.hops) {
      if (!h.confidence) continue;
      sum += *h.confidence;
      ++row.confidence_count;
    }
  }
  if (row.confidence_count) row.mean_confidence = sum / static_cast<double>(row.confidence_count);
  return row;
}

std::optional<double> macro_of(const std::vector<const ReportRow*>& rows,
                               std::optional<double> ReportRow::*field) {
  std::vector<double> values;
  for (const auto* r : rows) {
    if (r->*field) values.push_back(*(r->*field));
  }
  return macro_average(values);
}

}  // namespace

ReportTable aggregate_report(std::span<const ProbeSession> sessions, const std::vector<std::string>& group_by) {
  for (const auto& d : group_by) {
    if (std::find(kGroupDimensions.begin(), kGroupDimensions.end(), d) == kGroupDimensions.end()) {
      throw Error(ErrorCode::kConfigError, "unknown group-by dimension '" + d + "'");
    }
  }
  std::map<std::vector<std::string>, std::vector<ProbeSession>> groups;
  for (const auto& s : sessions) {
    if (s.baseline()) continue;
    std::vector<std::string> key;
    for (const auto& d : group_by) key.push_back(dimension_value(s, d));
    groups[key].push_back(s);
  }
  ReportTable table;
  table.group_by = group_by;
  for (const auto& [key, group] : groups) table.rows.push_back(make_row(key, group));

  const auto structure_at = std::find(group_by.begin(), group_by.end(), "structure");
  if (structure_at == group_by.end()) return table;
  const auto sidx = static_cast<std::size_t>(std::distance(group_by.begin(), structure_at));
  std::map<std::vector<std::string>, std::vector<const ReportRow*>> by_rest;
  for (const auto& r : table.rows) {
    auto rest = r.key;
    rest[sidx] = std::string(kMacroLabel);
    by_rest[rest].push_back(&r);
  }
  std::vector<ReportRow> macros;
  for (const auto& [key, rows] : by_rest) {
    ReportRow m;
    m.key = key;
    m.macro = true;
    for (const auto* r : rows) {
      m.counts.total += r->counts.total;
      m.counts.failed += r->counts.failed;
      m.counts.consistent += r->counts.consistent;
      m.counts.abstention += r->counts.abstention;
      m.counts.variation += r->counts.variation;
      m.confidence_count += r->confidence_count;
    }
    m.consistency = macro_of(rows, &ReportRow::consistency);
    m.abstention_rate = macro_of(rows, &ReportRow::abstention_rate);
    m.variation_rate = macro_of(rows, &ReportRow::variation_rate);
    m.mean_confidence = macro_of(rows, &ReportRow::mean_confidence);
    macros.push_back(std::move(m));
  }
  table.rows.insert(table.rows.end(), macros.begin(), macros.end());
  return table;
}

TTestResult paired_t_test(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::kInvalidArgument, "paired samples differ in size");
  if (x.size() < 2) throw Error(ErrorCode::kUndefinedMetric, "paired t-test needs at least two pairs");
  TTestResult r;
  r.n = x.size();
  r.df = r.n - 1;
  std::vector<double> d(r.n);
  for (std::size_t i = 0; i < r.n; ++i) d[i] = x[i] - y[i];
  r.mean_difference = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(r.n);
  double ss = 0.0;
  for (const double v : d) ss += (v - r.mean_difference) * (v - r.mean_difference);
  const double sd = std::sqrt(ss / static_cast<double>(r.df));
  if (sd == 0.0) {
    r.t = r.mean_difference == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), r.mean_difference);
    r.p_value = r.mean_difference == 0.0 ? 1.0 : 0.0;
    return r;
  }
  r.t = r.mean_difference / (sd / std::sqrt(static_cast<double>(r.n)));
  const boost::math::students_t dist(static_cast<double>(r.df));
  r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t)));
  return r;
}

TTestResult degree_t_test(std::span<const ProbeSession> sessions) {
  using Key = std::tuple<std::string, int, std::string, std::string, Ablation, std::string>;
  std::map<Key, std::pair<std::optional<double>, std::optional<double>>> pairs;
  for (const auto& s : sessions) {
    if (s.baseline() || s.final_status == FinalStatus::kFailed || !s.distracted_hop) continue;
    const Key key{s.chain_id, *s.distracted_hop, s.method, s.format, s.ablation, s.model_id};
    const double indicator = s.final_status == FinalStatus::kConsistent ? 1.0 : 0.0;
    auto& slot = pairs[key];
    if (s.degree == "TypeShift") {
      slot.first = indicator;
    } else {
      slot.second = indicator;
    }
  }
  std::vector<double> shift, match;
  for (const auto& [key, p] : pairs) {
    if (p.first && p.second) {
      shift.push_back(*p.first);
      match.push_back(*p.second);
    }
  }
  return paired_t_test(shift, match);
}

}  // namespace kcp
