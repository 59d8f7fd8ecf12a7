#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace dcan::labels {

struct Interval {
  double start = 0.0;
  double end = 0.0;
  double length() const { return end - start; }
};

// Normalized ground-truth instance set for one clip.
struct VideoAnnotation {
  std::vector<Interval> instances;  // 0 <= start < end <= 1
  double duration_seconds = 0.0;
};

struct LabelConfig {
  double region_scale = 1.0;   // multiplies the IoR region width
  double ior_threshold = 0.5;  // binarization of the IoR score
  double cls_binarize = 0.9;   // g_cls = (g_iou > cls_binarize)
};

struct GroundTruth {
  std::size_t T = 0, D = 0;
  std::vector<double> g_start, g_end;    // length T, binary
  std::vector<double> g_iou;             // D*T row-major, zero on invalid cells
  std::vector<double> g_cls;             // D*T binary
  std::vector<std::uint8_t> valid_mask;  // D*T, cell (i,j) valid iff j+i+1 <= T
};

// Temporal IoU of two intervals; 0 when disjoint or degenerate.
double iou(const Interval& a, const Interval& b);

// Boundary labels via IoR between position anchors (width 1/T) and boundary
// regions of width max(3/T, instance_length/10) centered on each boundary.
void boundary_labels(const VideoAnnotation& ann, std::size_t T,
                     std::vector<double>* g_start, std::vector<double>* g_end,
                     const LabelConfig& cfg = {});

// IoU map over matching cells: cell (i, j) is the interval
// [j/T, (j+i+1)/T] (row = duration-1 in grid units).
void matching_labels(const VideoAnnotation& ann, std::size_t T, std::size_t D,
                     std::vector<double>* g_iou, std::vector<double>* g_cls,
                     std::vector<std::uint8_t>* valid_mask,
                     const LabelConfig& cfg = {});

GroundTruth make_ground_truth(const VideoAnnotation& ann, std::size_t T,
                              std::size_t D, const LabelConfig& cfg = {});

std::vector<std::uint8_t> make_valid_mask(std::size_t D, std::size_t T);

// Matching-map cell (i, j) denotes the interval [j/T, (j+i+1)/T]: row i is
// duration-1 in grid units. One helper shared by label generation, the
// matching branch and score fusion so the convention cannot drift.
inline Interval cell_interval(std::size_t i, std::size_t j, std::size_t T) {
  const double invT = 1.0 / static_cast<double>(T);
  return Interval{j * invT, (j + i + 1) * invT};
}

// ActivityNet-style annotation JSON:
//   {video_id: {"duration": seconds, "annotations": [{"segment": [s, e]}]}}
// Segment seconds are normalized by the duration on load.
std::map<std::string, VideoAnnotation> load_annotations(
    const std::filesystem::path& p);

}  // namespace dcan::labels
