#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dcan/labels.hpp"

namespace dcan::eval {

struct ScoredInterval {
  double start = 0.0;
  double end = 0.0;
  double score = 0.0;
};

// Per-video sets; intervals in any consistent per-video unit (seconds here).
using ProposalMap = std::map<std::string, std::vector<ScoredInterval>>;
using GroundTruthMap = std::map<std::string, std::vector<labels::Interval>>;

struct MetricConfig {
  std::vector<double> tiou_grid_proposals;  // AR thresholds
  std::vector<double> tiou_grid_map;        // mAP thresholds
  std::size_t an_max = 100;

  static MetricConfig activitynet();  // [0.5:0.05:0.95], {0.5, 0.75, 0.95}
  static MetricConfig thumos();       // [0.5:0.05:1.0], {0.3..0.7}
  void validate() const;
};

// Fraction of ground-truth instances matched by the top-an proposals per
// video (greedy by rank, best unmatched gt, tIoU >= threshold), aggregated
// over all videos. Throws when there is no ground truth at all.
double recall_at(const ProposalMap& proposals, const GroundTruthMap& gts,
                 double tiou, std::size_t an);

// Mean of recall_at over the tIoU grid.
double ar_at_an(const ProposalMap& proposals, const GroundTruthMap& gts,
                const std::vector<double>& tiou_grid, std::size_t an);

// curve[k] = AR at AN = k+1, for AN in 1..an_max (fractions).
std::vector<double> ar_curve(const ProposalMap& proposals,
                             const GroundTruthMap& gts,
                             const std::vector<double>& tiou_grid,
                             std::size_t an_max);

// Trapezoidal integral of the AR curve over AN, normalized to percent.
double auc_from_curve(const std::vector<double>& curve);

// Class-agnostic AP via the area under the precision-recall envelope
// (all-point interpolation), predictions pooled over videos.
double average_precision(const ProposalMap& preds, const GroundTruthMap& gts,
                         double tiou);

struct MapResult {
  std::vector<std::pair<double, double>> per_tiou;  // (threshold, AP)
  double average = 0.0;
};

MapResult mean_average_precision(const ProposalMap& preds,
                                 const GroundTruthMap& gts,
                                 const std::vector<double>& tiou_grid);

struct MetricsReport {
  std::vector<std::pair<std::size_t, double>> ar_at;  // (AN, percent)
  double auc = 0.0;                                   // percent
  MapResult map;                                      // AP as fractions
  std::vector<double> curve;                          // AR fractions per AN
  std::string integration = "trapezoidal";
};

MetricsReport evaluate(const ProposalMap& proposals, const GroundTruthMap& gts,
                       const MetricConfig& cfg);

std::string format_table(const MetricsReport& report);
std::string metrics_json(const MetricsReport& report);  // deterministic bytes

// Proposal JSON ({video_id: [{"segment": [s, e], "score": v}]}) and
// annotation JSON, both kept in seconds.
ProposalMap load_proposals(const std::filesystem::path& p);
GroundTruthMap load_ground_truth(const std::filesystem::path& p);

}  // namespace dcan::eval
