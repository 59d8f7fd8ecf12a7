#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "dcan/nn.hpp"
#include "dcan/tensor.hpp"

namespace dcan::model {

struct ModelConfig {
  std::size_t T = 100;  // temporal length after preprocessing
  std::size_t D = 100;  // matching-map duration rows, D <= T
  std::size_t rgb_dim = 400;
  std::size_t flow_dim = 400;
  std::size_t base_channels = 128;  // filters per base path, also the CFM width
  std::size_t n_base = 3;
  std::size_t n_b = 6;  // count of MPTC-E (and of MPTC-S)
  std::size_t r_smooth = 3;
  std::size_t group_size = 2;  // G
  std::size_t n_sample = 32;
  std::size_t c_group = 512;   // group-embedding channels
  std::size_t c_hidden = 128;  // refinement channels
  bool mptc_smooth = true;     // false drops the MPTC-S blocks (ablation)

  void validate() const;  // throws ConfigError
};

struct ScheduleEntry {
  enum class Kind { Expand, Smooth };
  Kind kind = Kind::Expand;
  std::size_t dilation = 1;
};

// E entries carry dilation 2^i, i = 1..n_b; S entries carry r_smooth; the
// two kinds strictly alternate E, S, E, S, ...
struct DilationSchedule {
  std::vector<ScheduleEntry> entries;

  static DilationSchedule make(std::size_t n_b, std::size_t r_smooth,
                               bool include_smooth = true);
  void validate() const;
};

struct ForwardOutput {
  Tensor p_start;  // [B, T] in (0, 1)
  Tensor p_end;    // [B, T]
  Tensor m_cls;    // [B, D, T]
  Tensor m_reg;    // [B, D, T]
  std::vector<std::uint8_t> valid_mask;  // D*T, cell (i,j) valid iff j+i+1 <= T
};

// Samples n_sample evenly spaced points (endpoints inclusive) from the
// interval [s, e] of each group, s = jG/T, e = s + (i+1)G/T, reading
// fractional grid positions p*(T-1) by linear interpolation. Groups whose
// interval leaves the clip (e > 1) are zero-filled. Differentiable in f_p.
// f_p: [B, C, T] -> [B, D/G, T/G, C, n_sample].
Tensor group_sample(const Tensor& f_p, const ModelConfig& cfg);

// One Multi-Path Temporal Convolution block:
//   relu(norm(conv_long(x)) + norm(conv_short(x)) + norm(x))
// with independent normalization parameters on each path.
struct MptcBlock {
  nn::Conv1d conv_long;   // k=3, dilation r
  nn::Conv1d conv_short;  // k=3, dilation 1
  nn::Norm norm_long, norm_short, norm_in;

  MptcBlock() = default;
  MptcBlock(nn::ParamStore& params, const std::string& name,
            std::size_t channels, std::size_t dilation);
  Tensor forward(const Tensor& x) const;
};

class DcanModel {
 public:
  DcanModel(const ModelConfig& cfg, nn::ParamStore& params);

  // Two parallel conv paths over RGB and flow, concatenated on channels:
  // [B, rgb_dim, T] + [B, flow_dim, T] -> [B, 2*base_channels, T].
  Tensor base_forward(const Tensor& rgb, const Tensor& flow) const;

  // Stacked MPTC blocks, then a k=3 head to 2 channels + sigmoid.
  std::pair<Tensor, Tensor> mtca_forward(const Tensor& f) const;

  // Reduction conv -> group sampling -> linear embedding -> refinement
  // (log2(G) deconv stages, k=3 conv, 1x1 head + sigmoid) -> (m_cls, m_reg).
  std::pair<Tensor, Tensor> cfm_forward(const Tensor& f) const;

  ForwardOutput forward(const Tensor& rgb, const Tensor& flow) const;

  const ModelConfig& config() const { return cfg_; }
  const DilationSchedule& schedule() const { return schedule_; }

 private:
  ModelConfig cfg_;
  DilationSchedule schedule_;
  std::vector<nn::Conv1d> rgb_path_, flow_path_;
  std::vector<MptcBlock> mptc_;
  nn::Conv1d boundary_head_;
  nn::Conv1d cfm_reduce_;
  nn::Linear group_linear_;
  std::vector<nn::Deconv2d> refine_up_;
  nn::Conv2d refine_conv_;
  nn::Conv2d match_head_;
};

}  // namespace dcan::model
