#include "dcan/labels.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "dcan/errors.hpp"

namespace dcan::labels {

double iou(const Interval& a, const Interval& b) {
  if (a.length() <= 0.0 || b.length() <= 0.0) {
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true)) {
      std::cerr << "warning: iou on a degenerate interval, treating as 0\n";
    }
    return 0.0;
  }
  const double inter =
      std::min(a.end, b.end) - std::max(a.start, b.start);
  if (inter <= 0.0) return 0.0;
  const double uni = a.length() + b.length() - inter;
  return inter / uni;
}

namespace {

double overlap(double a_lo, double a_hi, double b_lo, double b_hi) {
  const double v = std::min(a_hi, b_hi) - std::max(a_lo, b_lo);
  return v > 0.0 ? v : 0.0;
}

}  // namespace

void boundary_labels(const VideoAnnotation& ann, std::size_t T,
                     std::vector<double>* g_start, std::vector<double>* g_end,
                     const LabelConfig& cfg) {
  if (T < 2) throw ShapeError("boundary_labels: T must be >= 2");
  g_start->assign(T, 0.0);
  g_end->assign(T, 0.0);
  const double delta = 1.0 / static_cast<double>(T);
  for (const Interval& inst : ann.instances) {
    const double w =
        cfg.region_scale * std::max(3.0 * delta, inst.length() / 10.0);
    const double half = 0.5 * w;
    for (std::size_t j = 0; j < T; ++j) {
      const double anchor_lo = j * delta - 0.5 * delta;
      const double anchor_hi = j * delta + 0.5 * delta;
      const double ior_s =
          overlap(anchor_lo, anchor_hi, inst.start - half, inst.start + half) /
          delta;
      const double ior_e =
          overlap(anchor_lo, anchor_hi, inst.end - half, inst.end + half) /
          delta;
      // Max over instances, kept binary.
      if (ior_s > cfg.ior_threshold) (*g_start)[j] = 1.0;
      if (ior_e > cfg.ior_threshold) (*g_end)[j] = 1.0;
    }
  }
}

std::vector<std::uint8_t> make_valid_mask(std::size_t D, std::size_t T) {
  std::vector<std::uint8_t> mask(D * T, 0);
  for (std::size_t i = 0; i < D; ++i) {
    for (std::size_t j = 0; j < T; ++j) {
      if (j + i + 1 <= T) mask[i * T + j] = 1;
    }
  }
  return mask;
}

void matching_labels(const VideoAnnotation& ann, std::size_t T, std::size_t D,
                     std::vector<double>* g_iou, std::vector<double>* g_cls,
                     std::vector<std::uint8_t>* valid_mask,
                     const LabelConfig& cfg) {
  if (D > T) throw ShapeError("matching_labels: D must be <= T");
  *valid_mask = make_valid_mask(D, T);
  g_iou->assign(D * T, 0.0);
  g_cls->assign(D * T, 0.0);
  for (std::size_t i = 0; i < D; ++i) {
    for (std::size_t j = 0; j < T; ++j) {
      if (!(*valid_mask)[i * T + j]) continue;
      const Interval cell = cell_interval(i, j, T);
      double best = 0.0;
      for (const Interval& inst : ann.instances) {
        best = std::max(best, iou(cell, inst));
      }
      (*g_iou)[i * T + j] = best;
      if (best > cfg.cls_binarize) (*g_cls)[i * T + j] = 1.0;
    }
  }
}

GroundTruth make_ground_truth(const VideoAnnotation& ann, std::size_t T,
                              std::size_t D, const LabelConfig& cfg) {
  GroundTruth gt;
  gt.T = T;
  gt.D = D;
  boundary_labels(ann, T, &gt.g_start, &gt.g_end, cfg);
  matching_labels(ann, T, D, &gt.g_iou, &gt.g_cls, &gt.valid_mask, cfg);
  return gt;
}

std::map<std::string, VideoAnnotation> load_annotations(
    const std::filesystem::path& p) {
  std::ifstream is(p);
  if (!is) throw ConfigError("annotations: cannot open " + p.string());
  nlohmann::json root = nlohmann::json::parse(is, nullptr, true);
  std::map<std::string, VideoAnnotation> out;
  for (auto it = root.begin(); it != root.end(); ++it) {
    const nlohmann::json& v = it.value();
    VideoAnnotation ann;
    ann.duration_seconds = v.at("duration").get<double>();
    if (ann.duration_seconds <= 0.0) {
      throw ConfigError("annotations: non-positive duration for " + it.key());
    }
    for (const nlohmann::json& a : v.value("annotations", nlohmann::json::array())) {
      const auto& seg = a.at("segment");
      double s = seg.at(0).get<double>() / ann.duration_seconds;
      double e = seg.at(1).get<double>() / ann.duration_seconds;
      s = std::clamp(s, 0.0, 1.0);
      e = std::clamp(e, 0.0, 1.0);
      if (e > s) ann.instances.push_back(Interval{s, e});
    }
    out.emplace(it.key(), std::move(ann));
  }
  return out;
}

}  // namespace dcan::labels
