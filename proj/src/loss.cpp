#include "dcan/loss.hpp"

#include <algorithm>
#include <cmath>

#include "dcan/errors.hpp"

namespace dcan::loss {

namespace {
constexpr double kZeroIouEps = 1e-12;
}

void LossConfig::validate() const {
  if (lambda <= 0.0) throw ConfigError("loss: lambda must be > 0");
  if (beta < 0.0) throw ConfigError("loss: beta must be >= 0");
  if (cls_binarize <= 0.0 || cls_binarize >= 1.0) {
    throw ConfigError("loss: cls_binarize must lie in (0, 1)");
  }
  if (neg_pos_ratio <= 0.0) throw ConfigError("loss: neg_pos_ratio must be > 0");
}

Targets stack_targets(std::span<const labels::GroundTruth> gts) {
  if (gts.empty()) throw ShapeError("stack_targets: empty batch");
  const std::size_t B = gts.size(), T = gts[0].T, D = gts[0].D;
  Targets t;
  t.g_start = Tensor({B, T});
  t.g_end = Tensor({B, T});
  t.g_iou = Tensor({B, D, T});
  t.g_cls = Tensor({B, D, T});
  t.valid_mask = gts[0].valid_mask;
  for (std::size_t b = 0; b < B; ++b) {
    const labels::GroundTruth& gt = gts[b];
    if (gt.T != T || gt.D != D) {
      throw ShapeError("stack_targets: inconsistent clip dimensions");
    }
    std::copy(gt.g_start.begin(), gt.g_start.end(), t.g_start.data() + b * T);
    std::copy(gt.g_end.begin(), gt.g_end.end(), t.g_end.data() + b * T);
    std::copy(gt.g_iou.begin(), gt.g_iou.end(), t.g_iou.data() + b * D * T);
    std::copy(gt.g_cls.begin(), gt.g_cls.end(), t.g_cls.data() + b * D * T);
  }
  return t;
}

Tensor wce(const Tensor& p, const Tensor& g,
           const std::vector<std::uint8_t>& mask, double clamp_eps) {
  if (p.shape() != g.shape()) {
    throw ShapeError("wce: prediction/label shape mismatch");
  }
  if (!mask.empty() && mask.size() != p.size()) {
    throw ShapeError("wce: mask size mismatch");
  }
  const std::size_t n = p.size();
  std::size_t count = 0, positives = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask.empty() && !mask[i]) continue;
    ++count;
    if (g[i] > 0.5) ++positives;
  }
  if (positives == 0 || positives == count) {
    throw DegenerateLabels("wce: need at least one positive and one negative");
  }
  const double ratio =
      static_cast<double>(count) / static_cast<double>(positives);
  const double coef_pos = 0.5 * ratio;
  const double coef_neg = 0.5 * ratio / (ratio - 1.0);

  Tensor w_pos(p.shape());
  Tensor w_neg(p.shape());
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask.empty() && !mask[i]) continue;
    if (g[i] > 0.5) {
      w_pos[i] = coef_pos;
    } else {
      w_neg[i] = coef_neg;
    }
  }
  Tensor pc = clamp(p, clamp_eps, 1.0 - clamp_eps);
  Tensor term = w_pos * log(pc) + w_neg * log(1.0 - pc);
  return sum(term) * (-1.0 / static_cast<double>(count));
}

std::optional<Tensor> reg_loss(const Tensor& m_reg, const Tensor& g_iou,
                               const std::vector<std::uint8_t>& mask, Rng& rng,
                               double neg_pos_ratio) {
  if (m_reg.shape() != g_iou.shape()) {
    throw ShapeError("reg_loss: prediction/label shape mismatch");
  }
  if (!mask.empty() && mask.size() != m_reg.size()) {
    throw ShapeError("reg_loss: mask size mismatch");
  }
  const std::size_t n = m_reg.size();
  std::vector<std::size_t> negatives;
  std::size_t n_pos = 0;
  Tensor sel(m_reg.shape());
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask.empty() && !mask[i]) continue;
    if (g_iou[i] > kZeroIouEps) {
      sel[i] = 1.0;
      ++n_pos;
    } else {
      negatives.push_back(i);
    }
  }
  if (n_pos == 0) return std::nullopt;

  std::size_t n_neg = static_cast<std::size_t>(
      std::llround(static_cast<double>(n_pos) * neg_pos_ratio));
  n_neg = std::min(n_neg, negatives.size());
  // Partial Fisher-Yates: the first n_neg entries become the sample.
  for (std::size_t i = 0; i < n_neg; ++i) {
    const std::size_t j = i + rng.uniform_index(negatives.size() - i);
    std::swap(negatives[i], negatives[j]);
    sel[negatives[i]] = 1.0;
  }

  const double count = static_cast<double>(n_pos + n_neg);
  Tensor diff = m_reg - g_iou;
  return sum(sel * diff * diff) / count;
}

Tensor total_loss(const model::ForwardOutput& out, const Targets& gt,
                  const std::vector<Tensor>& params, const LossConfig& cfg,
                  Rng& rng, LossBreakdown* breakdown) {
  LossBreakdown bd;
  Tensor total = Tensor::scalar(0.0);

  const std::vector<std::uint8_t> no_mask;
  try {
    Tensor l = wce(out.p_start, gt.g_start, no_mask, cfg.clamp_eps);
    bd.l_start = l.value();
    total = total + l;
  } catch (const DegenerateLabels&) {
    bd.skipped_start = true;
  }
  try {
    Tensor l = wce(out.p_end, gt.g_end, no_mask, cfg.clamp_eps);
    bd.l_end = l.value();
    total = total + l;
  } catch (const DegenerateLabels&) {
    bd.skipped_end = true;
  }

  // Tile the batch-shared cell mask over the batch.
  const std::size_t B = out.m_cls.shape()[0];
  const std::size_t cells = gt.valid_mask.size();
  std::vector<std::uint8_t> tiled(B * cells);
  for (std::size_t b = 0; b < B; ++b) {
    std::copy(gt.valid_mask.begin(), gt.valid_mask.end(),
              tiled.begin() + b * cells);
  }
  try {
    Tensor l = wce(out.m_cls, gt.g_cls, tiled, cfg.clamp_eps);
    bd.l_cls = l.value();
    total = total + l;
  } catch (const DegenerateLabels&) {
    bd.skipped_cls = true;
  }

  if (auto l = reg_loss(out.m_reg, gt.g_iou, tiled, rng, cfg.neg_pos_ratio)) {
    bd.l_reg = l->value();
    total = total + *l * cfg.lambda;
  } else {
    bd.skipped_reg = true;
  }

  if (cfg.beta > 0.0 && !params.empty()) {
    Tensor l2 = Tensor::scalar(0.0);
    for (const Tensor& theta : params) l2 = l2 + sum(theta * theta);
    bd.l2 = l2.value();
    total = total + l2 * cfg.beta;
  }

  bd.total = total.value();
  if (breakdown != nullptr) *breakdown = bd;
  return total;
}

}  // namespace dcan::loss
