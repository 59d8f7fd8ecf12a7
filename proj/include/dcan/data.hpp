#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dcan/labels.hpp"
#include "dcan/tensor.hpp"

namespace dcan::data {

struct FeatureSequence {
  std::string video_id;
  Tensor rgb;   // [T_raw, C_rgb]
  Tensor flow;  // [T_raw, C_flow]
  double frame_interval = 1.0;  // snippets per feature step (sigma)
  double duration_seconds = 0.0;

  std::size_t t_raw() const { return rgb.shape()[0]; }
};

struct Corpus {
  std::vector<FeatureSequence> videos;
  std::map<std::string, labels::VideoAnnotation> annotations;
};

// Linear-interpolation rescale along time: target index t reads source
// position t*(T_raw-1)/(L-1), per channel. feats: [T_raw, C].
Tensor rescale_features(const Tensor& feats, std::size_t L);
FeatureSequence rescale(const FeatureSequence& seq, std::size_t L);

struct Window {
  std::size_t offset = 0;  // raw-snippet offset inside the source video
  FeatureSequence features;
  labels::VideoAnnotation annotations;  // clipped to and renormalized within
};

// Overlapped windows starting at multiples of stride below T_raw (a video
// no longer than one window yields exactly one), zero-padded to size.
// Training mode drops windows void of actions.
std::vector<Window> window(const FeatureSequence& seq,
                           const labels::VideoAnnotation& ann,
                           std::size_t size, std::size_t stride,
                           bool training);

// Maps a window-normalized position back to video-normalized coordinates.
inline double window_to_video_norm(std::size_t offset, std::size_t size,
                                   std::size_t t_raw, double x) {
  return (static_cast<double>(offset) + x * static_cast<double>(size)) /
         static_cast<double>(t_raw);
}

struct SyntheticSpec {
  std::size_t n_videos = 10;
  std::size_t t_raw_min = 100, t_raw_max = 100;
  std::size_t instances_min = 1, instances_max = 3;
  double duration_frac_min = 0.1, duration_frac_max = 0.3;
  std::size_t rgb_dim = 16, flow_dim = 16;
  std::size_t pattern_channels = 4;  // per stream, disjoint channel indices
  double noise_level = 1.0;          // background gaussian sigma
  std::uint64_t seed = 1;

  void validate() const;
  static SyntheticSpec from_json_file(const std::filesystem::path& p);
};

// Seeded synthetic corpus: unit-gaussian background; inside each instance a
// channel subset gains a +2.0 mean offset with 2-snippet linear ramps at the
// boundaries; RGB and flow use disjoint pattern channels. Instances are
// placed non-overlapping; boundaries land on snippet indices.
Corpus generate_synthetic(const SyntheticSpec& spec);

// Manifest {video_id: {duration, t_raw, frame_interval, rgb_path, flow_path,
// annotations}} next to one tensor file per stream per video.
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& manifest_or_dir);

}  // namespace dcan::data
