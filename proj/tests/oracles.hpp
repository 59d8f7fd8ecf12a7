// Test-only oracles, independent of the library's computation paths:
// central finite differences for gradients, direct-summation convolution
// loops, Minkowski-sum receptive fields, and brute-force metric evaluation.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dcan/rng.hpp"
#include "dcan/tensor.hpp"

namespace oracles {

struct GradCheckResult {
  bool ok = true;
  std::string detail;
};

// Central-difference gradient check: runs one backward pass of loss_fn, then
// perturbs every element of every leaf (or a seeded sample of at most
// max_per_leaf elements) and compares the numeric slope against the
// analytic gradient.
inline GradCheckResult check_gradients(
    const std::function<dcan::Tensor()>& loss_fn,
    const std::vector<dcan::Tensor>& leaves, double rel_tol = 1e-4,
    double abs_floor = 1e-7, double h = 1e-5, std::size_t max_per_leaf = 64,
    std::uint64_t sample_seed = 7) {
  std::vector<std::vector<double>> analytic;
  {
    for (const dcan::Tensor& leaf : leaves) {
      dcan::Tensor l = leaf;  // shared storage; reset accumulation
      l.zero_grad();
    }
    dcan::Graph tape;
    dcan::Tensor loss = loss_fn();
    tape.backward(loss);
    for (const dcan::Tensor& leaf : leaves) {
      analytic.push_back(leaf.has_grad()
                             ? leaf.grad_vec()
                             : std::vector<double>(leaf.size(), 0.0));
    }
  }
  dcan::Rng rng(sample_seed);
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    dcan::Tensor leaf = leaves[li];
    std::vector<std::size_t> idx(leaf.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (idx.size() > max_per_leaf) {
      rng.shuffle(idx);
      idx.resize(max_per_leaf);
    }
    for (std::size_t i : idx) {
      const double orig = leaf[i];
      leaf[i] = orig + h;
      const double fp = loss_fn().value();
      leaf[i] = orig - h;
      const double fm = loss_fn().value();
      leaf[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[li][i];
      const double tol =
          std::max(abs_floor, rel_tol * std::max(std::abs(a), std::abs(numeric)));
      if (std::abs(a - numeric) > tol) {
        return {false, "leaf " + std::to_string(li) + " elem " +
                           std::to_string(i) + ": analytic " + std::to_string(a) +
                           " vs numeric " + std::to_string(numeric)};
      }
    }
  }
  return {};
}

inline void fill_uniform(dcan::Tensor& t, dcan::Rng& rng, double lo = -1.0,
                         double hi = 1.0) {
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
}

// Naive triple-loop matrix product.
inline std::vector<double> naive_matmul(const std::vector<double>& a,
                                        const std::vector<double>& b,
                                        std::size_t m, std::size_t k,
                                        std::size_t n) {
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) acc += a[i * k + kk] * b[kk * n + j];
      out[i * n + j] = acc;
    }
  }
  return out;
}

// Direct-summation dilated 1-D convolution with zero padding, matching the
// length-preserving contract.
inline std::vector<double> naive_conv1d(const std::vector<double>& x,
                                        const std::vector<double>& w,
                                        const std::vector<double>& bias,
                                        std::size_t B, std::size_t C_in,
                                        std::size_t T, std::size_t C_out,
                                        int k, int dilation) {
  std::vector<double> out(B * C_out * T, 0.0);
  const int half = k / 2;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t co = 0; co < C_out; ++co) {
      for (std::size_t t = 0; t < T; ++t) {
        double acc = bias[co];
        for (std::size_t ci = 0; ci < C_in; ++ci) {
          for (int kk = 0; kk < k; ++kk) {
            const long src = static_cast<long>(t) + (kk - half) * dilation;
            if (src < 0 || src >= static_cast<long>(T)) continue;
            acc += x[(b * C_in + ci) * T + src] * w[(co * C_in + ci) * k + kk];
          }
        }
        out[(b * C_out + co) * T + t] = acc;
      }
    }
  }
  return out;
}

// Direct-summation 2-D convolution, stride 1, zero padding (k-1)/2.
inline std::vector<double> naive_conv2d(const std::vector<double>& x,
                                        const std::vector<double>& w,
                                        const std::vector<double>& bias,
                                        std::size_t B, std::size_t C_in,
                                        std::size_t H, std::size_t W,
                                        std::size_t C_out, int k) {
  std::vector<double> out(B * C_out * H * W, 0.0);
  const int half = k / 2;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t co = 0; co < C_out; ++co) {
      for (std::size_t h = 0; h < H; ++h) {
        for (std::size_t ww = 0; ww < W; ++ww) {
          double acc = bias[co];
          for (std::size_t ci = 0; ci < C_in; ++ci) {
            for (int kh = 0; kh < k; ++kh) {
              for (int kw = 0; kw < k; ++kw) {
                const long sh = static_cast<long>(h) + kh - half;
                const long sw = static_cast<long>(ww) + kw - half;
                if (sh < 0 || sh >= static_cast<long>(H) || sw < 0 ||
                    sw >= static_cast<long>(W)) {
                  continue;
                }
                acc += x[((b * C_in + ci) * H + sh) * W + sw] *
                       w[((co * C_in + ci) * k + kh) * k + kw];
              }
            }
          }
          out[((b * C_out + co) * H + h) * W + ww] = acc;
        }
      }
    }
  }
  return out;
}

// Scatter-style transposed 2-D convolution oracle, kernel 4 stride 2 pad 1,
// weight layout [C_in, C_out, 4, 4]. Output is exactly [B, C_out, 2H, 2W].
inline std::vector<double> naive_deconv2d(const std::vector<double>& x,
                                          const std::vector<double>& w,
                                          const std::vector<double>& bias,
                                          std::size_t B, std::size_t C_in,
                                          std::size_t H, std::size_t W,
                                          std::size_t C_out) {
  const int k = 4, stride = 2, pad = 1;
  const std::size_t OH = 2 * H, OW = 2 * W;
  std::vector<double> out(B * C_out * OH * OW, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t co = 0; co < C_out; ++co) {
      for (std::size_t i = 0; i < OH * OW; ++i) {
        out[(b * C_out + co) * OH * OW + i] = bias[co];
      }
    }
  }
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t ci = 0; ci < C_in; ++ci) {
      for (std::size_t ih = 0; ih < H; ++ih) {
        for (std::size_t iw = 0; iw < W; ++iw) {
          const double xv = x[((b * C_in + ci) * H + ih) * W + iw];
          for (std::size_t co = 0; co < C_out; ++co) {
            for (int kh = 0; kh < k; ++kh) {
              for (int kw = 0; kw < k; ++kw) {
                const long oh = static_cast<long>(ih) * stride - pad + kh;
                const long ow = static_cast<long>(iw) * stride - pad + kw;
                if (oh < 0 || oh >= static_cast<long>(OH) || ow < 0 ||
                    ow >= static_cast<long>(OW)) {
                  continue;
                }
                out[((b * C_out + co) * OH + oh) * OW + ow] +=
                    xv * w[((ci * C_out + co) * k + kh) * k + kw];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

// Strided 2-D convolution (kernel 4, stride 2, pad 1) used only for the
// conv/deconv adjoint check; maps [C_in, 2H, 2W] -> [C_out swapped roles].
inline std::vector<double> naive_conv2d_stride2(
    const std::vector<double>& x, const std::vector<double>& w, std::size_t B,
    std::size_t C_in, std::size_t H, std::size_t W, std::size_t C_out) {
  const int k = 4, stride = 2, pad = 1;
  const std::size_t OH = H / 2, OW = W / 2;
  std::vector<double> out(B * C_out * OH * OW, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t co = 0; co < C_out; ++co) {
      for (std::size_t oh = 0; oh < OH; ++oh) {
        for (std::size_t ow = 0; ow < OW; ++ow) {
          double acc = 0.0;
          for (std::size_t ci = 0; ci < C_in; ++ci) {
            for (int kh = 0; kh < k; ++kh) {
              for (int kw = 0; kw < k; ++kw) {
                const long sh = static_cast<long>(oh) * stride - pad + kh;
                const long sw = static_cast<long>(ow) * stride - pad + kw;
                if (sh < 0 || sh >= static_cast<long>(H) || sw < 0 ||
                    sw >= static_cast<long>(W)) {
                  continue;
                }
                // Weight layout shared with deconv, [deconv_in][deconv_out]:
                // this conv's output channel is the deconv's input channel.
                acc += x[((b * C_in + ci) * H + sh) * W + sw] *
                       w[((co * C_in + ci) * k + kh) * k + kw];
              }
            }
          }
          out[((b * C_out + co) * OH + oh) * OW + ow] = acc;
        }
      }
    }
  }
  return out;
}

// Minkowski-sum receptive-field oracle over per-layer offset sets.
inline std::set<int> minkowski_rf(const std::vector<std::set<int>>& layers) {
  std::set<int> acc{0};
  for (const auto& layer : layers) {
    std::set<int> next;
    for (int a : acc) {
      for (int b : layer) next.insert(a + b);
    }
    acc = std::move(next);
  }
  return acc;
}

inline std::set<int> conv_offsets(int kernel, int dilation) {
  std::set<int> s;
  const int half = kernel / 2;
  for (int i = -half; i <= half; ++i) s.insert(i * dilation);
  return s;
}

// --- Brute-force detection-metric oracles ---------------------------------

struct EvalPred {
  std::string vid;
  double start, end, score;
};
using EvalGtMap = std::map<std::string, std::vector<std::pair<double, double>>>;

inline double interval_iou(double s1, double e1, double s2, double e2) {
  if (e1 <= s1 || e2 <= s2) return 0.0;
  const double inter = std::min(e1, e2) - std::max(s1, s2);
  if (inter <= 0.0) return 0.0;
  return inter / ((e1 - s1) + (e2 - s2) - inter);
}

// Score-ordered greedy match count over a pooled prediction subset, with the
// (score desc, vid, start, end) tie order and per-video single-use gts.
inline std::size_t bf_greedy_tp(std::vector<EvalPred> preds,
                                const EvalGtMap& gts, double tiou) {
  std::sort(preds.begin(), preds.end(), [](const EvalPred& a, const EvalPred& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.vid != b.vid) return a.vid < b.vid;
    if (a.start != b.start) return a.start < b.start;
    return a.end < b.end;
  });
  std::map<std::string, std::vector<bool>> used;
  for (const auto& [vid, v] : gts) used[vid].assign(v.size(), false);
  std::size_t tp = 0;
  for (const EvalPred& p : preds) {
    auto it = gts.find(p.vid);
    if (it == gts.end()) continue;
    double best_iou = 0.0;
    std::size_t best = it->second.size();
    for (std::size_t g = 0; g < it->second.size(); ++g) {
      if (used[p.vid][g]) continue;
      const double v = interval_iou(p.start, p.end, it->second[g].first,
                                    it->second[g].second);
      if (v >= tiou && v > best_iou) {
        best_iou = v;
        best = g;
      }
    }
    if (best < it->second.size()) {
      used[p.vid][best] = true;
      ++tp;
    }
  }
  return tp;
}

// AP by enumerating every score-threshold operating point and integrating
// the precision envelope over the achieved recall points.
inline double brute_force_ap(const std::vector<EvalPred>& preds,
                             const EvalGtMap& gts, double tiou) {
  std::size_t total = 0;
  for (const auto& [vid, v] : gts) total += v.size();
  if (total == 0 || preds.empty()) return 0.0;

  std::vector<double> thresholds;
  for (const EvalPred& p : preds) thresholds.push_back(p.score);
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());

  struct Point {
    double recall, precision;
  };
  std::vector<Point> points;
  for (double th : thresholds) {
    std::vector<EvalPred> subset;
    for (const EvalPred& p : preds) {
      if (p.score >= th) subset.push_back(p);
    }
    const std::size_t tp = bf_greedy_tp(subset, gts, tiou);
    points.push_back({static_cast<double>(tp) / static_cast<double>(total),
                      static_cast<double>(tp) / static_cast<double>(subset.size())});
  }
  std::sort(points.begin(), points.end(),
            [](const Point& a, const Point& b) { return a.recall < b.recall; });
  double ap = 0.0, prev_r = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    double env = 0.0;
    for (std::size_t j = i; j < points.size(); ++j) {
      env = std::max(env, points[j].precision);
    }
    ap += (points[i].recall - prev_r) * env;
    prev_r = points[i].recall;
  }
  return ap;
}

// Literal per-video restatement of the recall contract: take the top-an
// proposals by score, greedily match each against the best unmatched gt.
inline double brute_force_recall(
    const std::map<std::string, std::vector<EvalPred>>& per_video,
    const EvalGtMap& gts, double tiou, std::size_t an) {
  std::size_t total = 0, matched = 0;
  for (const auto& [vid, v] : gts) total += v.size();
  for (const auto& [vid, instances] : gts) {
    auto it = per_video.find(vid);
    if (it == per_video.end()) continue;
    std::vector<EvalPred> props = it->second;
    // Selection sort by (score desc, start asc, shorter first).
    for (std::size_t i = 0; i < props.size(); ++i) {
      std::size_t best = i;
      for (std::size_t j = i + 1; j < props.size(); ++j) {
        const EvalPred &a = props[j], &b = props[best];
        const bool better =
            a.score > b.score ||
            (a.score == b.score &&
             (a.start < b.start ||
              (a.start == b.start && (a.end - a.start) < (b.end - b.start))));
        if (better) best = j;
      }
      std::swap(props[i], props[best]);
    }
    if (props.size() > an) props.resize(an);
    std::vector<bool> used(instances.size(), false);
    for (const EvalPred& p : props) {
      double best_iou = 0.0;
      std::size_t best = instances.size();
      for (std::size_t g = 0; g < instances.size(); ++g) {
        if (used[g]) continue;
        const double v = interval_iou(p.start, p.end, instances[g].first,
                                      instances[g].second);
        if (v >= tiou && v > best_iou) {
          best_iou = v;
          best = g;
        }
      }
      if (best < instances.size()) {
        used[best] = true;
        ++matched;
      }
    }
  }
  return total == 0 ? 0.0
                    : static_cast<double>(matched) / static_cast<double>(total);
}

}  // namespace oracles
