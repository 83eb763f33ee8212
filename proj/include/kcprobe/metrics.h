#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kcprobe/knowledge.h"
#include "kcprobe/probe.h"

namespace kcp {

/// exp(sum of logprobs). Throws kUndefinedMetric for an empty list and
/// kInvalidArgument for a positive logprob.
double confidence(std::span<const double> logprobs);

struct OutcomeCounts {
  std::size_t total = 0;  // including failed
  std::size_t failed = 0;
  std::size_t consistent = 0;
  std::size_t abstention = 0;
  std::size_t variation = 0;

  std::size_t scored() const { return total - failed; }
  std::size_t inconsistent() const { return abstention + variation; }
};

OutcomeCounts count_outcomes(std::span<const ProbeSession> sessions);

/// M/N over non-failed sessions; throws kUndefinedMetric when N = 0.
double consistency(std::span<const ProbeSession> sessions);

struct InconsistentSplit {
  std::optional<double> abstention;
  std::optional<double> variation;
  std::size_t inconsistent = 0;
};

/// Rates over inconsistent sessions only; both empty when there are none.
InconsistentSplit split_inconsistent(std::span<const ProbeSession> sessions);

/// Bin edges over [0, 1]; the last bin is closed.
struct Bins {
  std::vector<double> edges;

  static Bins uniform(double width = 0.1);
  /// Throws kInvalidArgument unless the edges start at 0, end at 1 and
  /// strictly increase.
  void validate() const;
  std::size_t size() const { return edges.size() - 1; }
  std::size_t locate(double value) const;
};

struct BinRow {
  double lo = 0;
  double hi = 0;
  std::size_t count = 0;
  std::size_t conforming = 0;
  std::optional<double> ratio;
};

enum class HopSelection {
  /// The hop carrying the distractor, when it asked for the graph relation.
  kDistractedHop,
  /// Every hop that asked for a graph relation.
  kAllPkgHops,
};

/// relation_key -> construction-time confidence for every edge that has one.
std::map<std::string, double> baseline_confidences(const Pkg& graph);

/// Hops bucketed by the construction-time confidence of the queried
/// relation. Hops without a baseline confidence are skipped.
std::vector<BinRow> conforming_ratio_by_confidence(std::span<const ProbeSession> sessions,
                                                   const std::map<std::string, double>& baseline,
                                                   const Bins& bins = Bins::uniform(),
                                                   HopSelection selection = HopSelection::kDistractedHop);

struct DeltaSummary {
  std::size_t count = 0;
  std::size_t unpaired = 0;
  std::optional<double> mean;
  std::optional<double> fraction_positive;
  /// Histogram over [-1, 1].
  std::vector<double> histogram_edges;
  std::vector<std::size_t> histogram;
  std::vector<double> deltas;
};

/// Per-hop confidence(with distractor) - confidence(baseline) for hops of
/// the given class. Pairs on (chain, hop, ablation, model).
DeltaSummary confidence_change(std::span<const ProbeSession> distracted,
                               std::span<const ProbeSession> baselines, HopClass partition,
                               double histogram_width = 0.1);

/// Summary of a list of deltas (used by confidence_change and by tests).
DeltaSummary summarize_deltas(std::vector<double> deltas, double histogram_width = 0.1);

inline const std::vector<std::string> kGroupDimensions{"method",    "degree", "position", "format",
                                                       "structure", "model",  "ablation"};

/// Value of one grouping dimension for a session. Throws kConfigError for an
/// unknown dimension.
std::string dimension_value(const ProbeSession& s, const std::string& dimension);

struct ReportRow {
  std::vector<std::string> key;  // one value per group_by dimension
  bool macro = false;
  OutcomeCounts counts;
  std::optional<double> consistency;
  std::optional<double> abstention_rate;
  std::optional<double> variation_rate;
  std::optional<double> mean_confidence;
  std::size_t confidence_count = 0;
};

struct ReportTable {
  std::vector<std::string> group_by;
  std::vector<ReportRow> rows;
};

inline constexpr std::string_view kMacroLabel = "macro-avg";

/// Groups distracted sessions (baselines are ignored). When "structure" is a
/// dimension, each combination of the other dimensions also gets a
/// macro-average row: the unweighted mean over structure kinds.
ReportTable aggregate_report(std::span<const ProbeSession> sessions,
                             const std::vector<std::string>& group_by);

std::optional<double> macro_average(std::span<const double> values);

struct TTestResult {
  std::size_t n = 0;
  double mean_difference = 0;
  double t = 0;
  double p_value = 1;
  std::size_t df = 0;
};

/// Two-sided paired Student's t-test. Throws kUndefinedMetric below two pairs.
TTestResult paired_t_test(std::span<const double> x, std::span<const double> y);

/// Pairs TypeMatch with TypeShift sessions sharing chain, hop, method,
/// format, ablation and model, on the 0/1 consistency indicator.
TTestResult degree_t_test(std::span<const ProbeSession> sessions);

}  // namespace kcp
