#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "dcan/labels.hpp"
#include "dcan/model.hpp"
#include "dcan/rng.hpp"
#include "dcan/tensor.hpp"

namespace dcan::loss {

struct LossConfig {
  double lambda = 10.0;       // weight of the IoU regression term
  double beta = 1e-4;         // weight of the parameter L2 term
  double cls_binarize = 0.9;  // consumed by label generation
  double neg_pos_ratio = 1.0; // balanced sampling in reg_loss
  double clamp_eps = 1e-7;

  void validate() const;
};

// Raised when a weighted term has no positives or no negatives among the
// masked entries; the caller may skip that term for the clip.
struct DegenerateLabels : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Ground truth stacked over a batch as constant tensors.
struct Targets {
  Tensor g_start, g_end;  // [B, T]
  Tensor g_iou, g_cls;    // [B, D, T]
  std::vector<std::uint8_t> valid_mask;  // D*T, shared across the batch
};

Targets stack_targets(std::span<const labels::GroundTruth> gts);

// Weighted binary cross-entropy with coefficients 0.5*ratio on positives and
// 0.5*ratio/(ratio-1) on negatives, ratio = N/N+. Empty mask = all entries;
// otherwise mask.size() must equal p.size().
Tensor wce(const Tensor& p, const Tensor& g,
           const std::vector<std::uint8_t>& mask, double clamp_eps = 1e-7);

// Mean squared error over positive cells (g > 0) plus an equal-size seeded
// random sample of zero cells. Returns nothing when no positive cell exists.
std::optional<Tensor> reg_loss(const Tensor& m_reg, const Tensor& g_iou,
                               const std::vector<std::uint8_t>& mask, Rng& rng,
                               double neg_pos_ratio = 1.0);

struct LossBreakdown {
  double l_start = 0.0, l_end = 0.0, l_cls = 0.0, l_reg = 0.0, l2 = 0.0;
  double total = 0.0;
  bool skipped_start = false, skipped_end = false, skipped_cls = false,
       skipped_reg = false;
};

// L = wce(p_start) + wce(p_end) + wce(m_cls) + lambda*reg + beta*sum(theta^2).
Tensor total_loss(const model::ForwardOutput& out, const Targets& gt,
                  const std::vector<Tensor>& params, const LossConfig& cfg,
                  Rng& rng, LossBreakdown* breakdown = nullptr);

}  // namespace dcan::loss
