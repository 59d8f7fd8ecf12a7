#include "dcan/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dcan/errors.hpp"

namespace dcan::eval {

MetricConfig MetricConfig::activitynet() {
  MetricConfig cfg;
  for (int i = 0; i <= 9; ++i) cfg.tiou_grid_proposals.push_back(0.5 + 0.05 * i);
  cfg.tiou_grid_map = {0.5, 0.75, 0.95};
  cfg.an_max = 100;
  return cfg;
}

MetricConfig MetricConfig::thumos() {
  MetricConfig cfg;
  for (int i = 0; i <= 10; ++i) cfg.tiou_grid_proposals.push_back(0.5 + 0.05 * i);
  cfg.tiou_grid_map = {0.3, 0.4, 0.5, 0.6, 0.7};
  cfg.an_max = 100;
  return cfg;
}

void MetricConfig::validate() const {
  auto check_grid = [](const std::vector<double>& g, const char* name) {
    if (g.empty()) throw ConfigError(std::string("metric: empty ") + name);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (g[i] <= 0.0 || g[i] > 1.0) {
        throw ConfigError(std::string("metric: ") + name +
                          " thresholds must lie in (0, 1]");
      }
      if (i > 0 && g[i] <= g[i - 1]) {
        throw ConfigError(std::string("metric: ") + name +
                          " must be strictly increasing");
      }
    }
  };
  check_grid(tiou_grid_proposals, "proposal grid");
  check_grid(tiou_grid_map, "map grid");
  if (an_max < 1) throw ConfigError("metric: an_max must be >= 1");
}

namespace {

bool rank_order(const ScoredInterval& a, const ScoredInterval& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.start != b.start) return a.start < b.start;
  return (a.end - a.start) < (b.end - b.start);
}

std::size_t total_instances(const GroundTruthMap& gts) {
  std::size_t n = 0;
  for (const auto& [vid, v] : gts) n += v.size();
  return n;
}

// Greedy matching of ranked proposals against one video's instances;
// matched[k] = cumulative matches after the first k+1 proposals.
std::vector<std::size_t> greedy_matches(
    const std::vector<ScoredInterval>& ranked,
    const std::vector<labels::Interval>& gts, double tiou,
    std::size_t limit) {
  std::vector<bool> taken(gts.size(), false);
  std::vector<std::size_t> cum;
  std::size_t matched = 0;
  const std::size_t n = std::min(limit, ranked.size());
  cum.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    double best_iou = 0.0;
    std::size_t best = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g]) continue;
      const double v =
          labels::iou({ranked[k].start, ranked[k].end}, gts[g]);
      if (v >= tiou && v > best_iou) {
        best_iou = v;
        best = g;
      }
    }
    if (best < gts.size()) {
      taken[best] = true;
      ++matched;
    }
    cum.push_back(matched);
  }
  return cum;
}

}  // namespace

double recall_at(const ProposalMap& proposals, const GroundTruthMap& gts,
                 double tiou, std::size_t an) {
  const std::size_t total = total_instances(gts);
  if (total == 0) throw ConfigError("recall: no ground-truth instances");
  std::size_t matched = 0;
  for (const auto& [vid, instances] : gts) {
    if (instances.empty()) continue;
    const auto it = proposals.find(vid);
    if (it == proposals.end() || it->second.empty()) continue;
    std::vector<ScoredInterval> ranked = it->second;
    std::sort(ranked.begin(), ranked.end(), rank_order);
    const auto cum = greedy_matches(ranked, instances, tiou, an);
    if (!cum.empty()) matched += cum.back();
  }
  return static_cast<double>(matched) / static_cast<double>(total);
}

double ar_at_an(const ProposalMap& proposals, const GroundTruthMap& gts,
                const std::vector<double>& tiou_grid, std::size_t an) {
  double acc = 0.0;
  for (double t : tiou_grid) acc += recall_at(proposals, gts, t, an);
  return acc / static_cast<double>(tiou_grid.size());
}

std::vector<double> ar_curve(const ProposalMap& proposals,
                             const GroundTruthMap& gts,
                             const std::vector<double>& tiou_grid,
                             std::size_t an_max) {
  const std::size_t total = total_instances(gts);
  if (total == 0) throw ConfigError("recall: no ground-truth instances");
  // matched_sum[t][k] = total matches across videos with AN = k+1.
  std::vector<std::vector<std::size_t>> matched_sum(
      tiou_grid.size(), std::vector<std::size_t>(an_max, 0));
  for (const auto& [vid, instances] : gts) {
    if (instances.empty()) continue;
    const auto it = proposals.find(vid);
    if (it == proposals.end() || it->second.empty()) continue;
    std::vector<ScoredInterval> ranked = it->second;
    std::sort(ranked.begin(), ranked.end(), rank_order);
    for (std::size_t t = 0; t < tiou_grid.size(); ++t) {
      const auto cum = greedy_matches(ranked, instances, tiou_grid[t], an_max);
      for (std::size_t k = 0; k < an_max; ++k) {
        matched_sum[t][k] += k < cum.size() ? cum[k] : cum.back();
      }
    }
  }
  std::vector<double> curve(an_max, 0.0);
  for (std::size_t k = 0; k < an_max; ++k) {
    double acc = 0.0;
    for (std::size_t t = 0; t < tiou_grid.size(); ++t) {
      acc += static_cast<double>(matched_sum[t][k]) /
             static_cast<double>(total);
    }
    curve[k] = acc / static_cast<double>(tiou_grid.size());
  }
  return curve;
}

double auc_from_curve(const std::vector<double>& curve) {
  if (curve.size() < 2) throw ConfigError("auc: need at least two AN points");
  double area = 0.0;
  for (std::size_t k = 1; k < curve.size(); ++k) {
    area += 0.5 * (curve[k - 1] + curve[k]);
  }
  return area / static_cast<double>(curve.size() - 1) * 100.0;
}

double average_precision(const ProposalMap& preds, const GroundTruthMap& gts,
                         double tiou) {
  const std::size_t total = total_instances(gts);
  if (total == 0) throw ConfigError("ap: no ground-truth instances");

  struct Pred {
    std::string vid;
    ScoredInterval iv;
  };
  std::vector<Pred> pool;
  for (const auto& [vid, v] : preds) {
    for (const ScoredInterval& p : v) pool.push_back({vid, p});
  }
  std::sort(pool.begin(), pool.end(), [](const Pred& a, const Pred& b) {
    if (a.iv.score != b.iv.score) return a.iv.score > b.iv.score;
    if (a.vid != b.vid) return a.vid < b.vid;
    if (a.iv.start != b.iv.start) return a.iv.start < b.iv.start;
    return a.iv.end < b.iv.end;
  });

  std::map<std::string, std::vector<bool>> taken;
  for (const auto& [vid, v] : gts) taken[vid].assign(v.size(), false);

  std::vector<double> recall(pool.size()), precision(pool.size());
  std::size_t tp = 0;
  for (std::size_t k = 0; k < pool.size(); ++k) {
    const auto git = gts.find(pool[k].vid);
    bool hit = false;
    if (git != gts.end()) {
      auto& used = taken[pool[k].vid];
      double best_iou = 0.0;
      std::size_t best = git->second.size();
      for (std::size_t g = 0; g < git->second.size(); ++g) {
        if (used[g]) continue;
        const double v = labels::iou({pool[k].iv.start, pool[k].iv.end},
                                     git->second[g]);
        if (v >= tiou && v > best_iou) {
          best_iou = v;
          best = g;
        }
      }
      if (best < git->second.size()) {
        used[best] = true;
        hit = true;
      }
    }
    if (hit) ++tp;
    recall[k] = static_cast<double>(tp) / static_cast<double>(total);
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
  }

  // Area under the precision envelope over all recall points.
  double ap = 0.0;
  double env = 0.0;
  double prev_recall_at = 0.0;
  std::vector<double> envelope(pool.size());
  for (std::size_t k = pool.size(); k-- > 0;) {
    env = std::max(env, precision[k]);
    envelope[k] = env;
  }
  for (std::size_t k = 0; k < pool.size(); ++k) {
    ap += (recall[k] - prev_recall_at) * envelope[k];
    prev_recall_at = recall[k];
  }
  return ap;
}

MapResult mean_average_precision(const ProposalMap& preds,
                                 const GroundTruthMap& gts,
                                 const std::vector<double>& tiou_grid) {
  MapResult res;
  double acc = 0.0;
  for (double t : tiou_grid) {
    const double ap = average_precision(preds, gts, t);
    res.per_tiou.emplace_back(t, ap);
    acc += ap;
  }
  res.average = acc / static_cast<double>(tiou_grid.size());
  return res;
}

MetricsReport evaluate(const ProposalMap& proposals, const GroundTruthMap& gts,
                       const MetricConfig& cfg) {
  cfg.validate();
  MetricsReport report;
  report.curve = ar_curve(proposals, gts, cfg.tiou_grid_proposals, cfg.an_max);
  for (std::size_t an : {std::size_t{1}, std::size_t{5}, std::size_t{10},
                         std::size_t{50}, std::size_t{100}}) {
    if (an <= report.curve.size()) {
      report.ar_at.emplace_back(an, report.curve[an - 1] * 100.0);
    }
  }
  report.auc = auc_from_curve(report.curve);
  report.map = mean_average_precision(proposals, gts, cfg.tiou_grid_map);
  return report;
}

std::string format_table(const MetricsReport& report) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << std::left << std::setw(14) << "metric" << std::right << std::setw(10)
     << "value" << "\n";
  for (const auto& [an, v] : report.ar_at) {
    os << std::left << std::setw(14) << ("AR@" + std::to_string(an))
       << std::right << std::setw(10) << v << "\n";
  }
  os << std::left << std::setw(14) << "AUC" << std::right << std::setw(10)
     << report.auc << "\n";
  for (const auto& [t, ap] : report.map.per_tiou) {
    std::ostringstream key;
    key << "mAP@" << std::setprecision(2) << t;
    os << std::left << std::setw(14) << key.str() << std::right
       << std::setw(10) << ap * 100.0 << "\n";
  }
  os << std::left << std::setw(14) << "mAP(avg)" << std::right << std::setw(10)
     << report.map.average * 100.0 << "\n";
  return os.str();
}

std::string metrics_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json ar;
  for (const auto& [an, v] : report.ar_at) ar["AR@" + std::to_string(an)] = v;
  j["ar_at_an"] = ar;
  j["auc"] = report.auc;
  nlohmann::ordered_json map_j;
  for (const auto& [t, ap] : report.map.per_tiou) {
    std::ostringstream key;
    key << std::fixed << std::setprecision(2) << t;
    map_j[key.str()] = ap;
  }
  j["map"] = map_j;
  j["map_average"] = report.map.average;
  j["ar_curve"] = report.curve;
  j["metadata"] = {{"auc_integration", report.integration},
                   {"an_max", report.curve.size()}};
  return j.dump(2) + "\n";
}

ProposalMap load_proposals(const std::filesystem::path& p) {
  std::ifstream is(p);
  if (!is) throw ConfigError("proposals: cannot open " + p.string());
  nlohmann::json root = nlohmann::json::parse(is, nullptr, true);
  ProposalMap out;
  for (auto it = root.begin(); it != root.end(); ++it) {
    std::vector<ScoredInterval> v;
    for (const auto& e : it.value()) {
      ScoredInterval si;
      si.start = e.at("segment").at(0).get<double>();
      si.end = e.at("segment").at(1).get<double>();
      si.score = e.at("score").get<double>();
      v.push_back(si);
    }
    out.emplace(it.key(), std::move(v));
  }
  return out;
}

GroundTruthMap load_ground_truth(const std::filesystem::path& p) {
  std::ifstream is(p);
  if (!is) throw ConfigError("ground truth: cannot open " + p.string());
  nlohmann::json root = nlohmann::json::parse(is, nullptr, true);
  GroundTruthMap out;
  for (auto it = root.begin(); it != root.end(); ++it) {
    std::vector<labels::Interval> v;
    const auto& anns = it.value().value("annotations", nlohmann::json::array());
    for (const auto& a : anns) {
      const auto& seg = a.at("segment");
      labels::Interval iv{seg.at(0).get<double>(), seg.at(1).get<double>()};
      if (iv.end > iv.start) v.push_back(iv);
    }
    out.emplace(it.key(), std::move(v));
  }
  return out;
}

}  // namespace dcan::eval
