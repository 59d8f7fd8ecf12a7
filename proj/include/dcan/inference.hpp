#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dcan/model.hpp"

namespace dcan::infer {

struct Proposal {
  double start = 0.0;  // normalized, 0 <= start < end <= 1
  double end = 0.0;
  double score = 0.0;
};

struct FusionConfig {
  double gamma = 0.8;  // 0.8 ActivityNet mode, 1.5 THUMOS mode
  double snms_threshold = 0.5;
  double snms_sigma = 0.4;
  enum class SnmsMode { Gaussian, Linear };
  SnmsMode snms_mode = SnmsMode::Gaussian;
  std::size_t n_final = 100;

  void validate() const;
};

// One video's slice of the network outputs, on the host.
struct VideoScores {
  std::size_t T = 0, D = 0;
  std::vector<double> p_start, p_end;    // length T
  std::vector<double> m_cls, m_reg;      // D*T row-major
  std::vector<std::uint8_t> valid_mask;  // D*T
};

VideoScores slice_output(const model::ForwardOutput& out,
                         std::size_t batch_index);

// Candidate per valid cell (i, j): interval [j/T, (j+i+1)/T], score
// p_start[ts] * p_end[min(te, T-1)] * (m_cls * m_reg)^gamma.
std::vector<Proposal> fuse_scores(const VideoScores& vs,
                                  const FusionConfig& cfg);

// Keeps proposals whose boundary probabilities reach half of the
// corresponding maximum (inclusive).
std::vector<Proposal> filter_boundaries(const std::vector<Proposal>& props,
                                        const std::vector<double>& p_start,
                                        const std::vector<double>& p_end);

// Iterative best-first selection with score decay on the rest; returns the
// selected set sorted by decayed score, truncated to n_final. Ties break by
// earlier start, then shorter duration.
std::vector<Proposal> soft_nms(std::vector<Proposal> pool,
                               const FusionConfig& cfg);

// fuse -> filter -> soft-nms for one video.
std::vector<Proposal> generate_proposals(const VideoScores& vs,
                                         const FusionConfig& cfg);

// {video_id: [{"segment": [s_sec, e_sec], "score": v}, ...]};
// seconds = normalized position * duration.
void write_proposals_json(
    const std::filesystem::path& p,
    const std::map<std::string, std::vector<Proposal>>& proposals,
    const std::map<std::string, double>& durations);

}  // namespace dcan::infer
