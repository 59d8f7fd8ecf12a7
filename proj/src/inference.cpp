#include "dcan/inference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "dcan/errors.hpp"
#include "dcan/labels.hpp"

namespace dcan::infer {

void FusionConfig::validate() const {
  if (gamma <= 0.0) throw ConfigError("fusion: gamma must be > 0");
  if (snms_threshold <= 0.0 || snms_threshold >= 1.0) {
    throw ConfigError("fusion: snms_threshold must lie in (0, 1)");
  }
  if (snms_sigma <= 0.0) throw ConfigError("fusion: snms_sigma must be > 0");
  if (n_final < 1) throw ConfigError("fusion: n_final must be >= 1");
}

VideoScores slice_output(const model::ForwardOutput& out,
                         std::size_t batch_index) {
  const std::size_t B = out.p_start.shape()[0];
  if (batch_index >= B) throw ShapeError("slice_output: batch index out of range");
  const std::size_t T = out.p_start.shape()[1];
  const std::size_t D = out.m_cls.shape()[1];
  VideoScores vs;
  vs.T = T;
  vs.D = D;
  const double* ps = out.p_start.data() + batch_index * T;
  const double* pe = out.p_end.data() + batch_index * T;
  vs.p_start.assign(ps, ps + T);
  vs.p_end.assign(pe, pe + T);
  const double* mc = out.m_cls.data() + batch_index * D * T;
  const double* mr = out.m_reg.data() + batch_index * D * T;
  vs.m_cls.assign(mc, mc + D * T);
  vs.m_reg.assign(mr, mr + D * T);
  vs.valid_mask = out.valid_mask;
  return vs;
}

std::vector<Proposal> fuse_scores(const VideoScores& vs,
                                  const FusionConfig& cfg) {
  if (vs.p_start.size() != vs.T || vs.m_cls.size() != vs.D * vs.T ||
      vs.valid_mask.size() != vs.D * vs.T) {
    throw ShapeError("fuse_scores: inconsistent score buffers");
  }
  std::vector<Proposal> props;
  props.reserve(vs.D * vs.T / 2);
  const double invT = 1.0 / static_cast<double>(vs.T);
  for (std::size_t i = 0; i < vs.D; ++i) {
    for (std::size_t j = 0; j < vs.T; ++j) {
      if (!vs.valid_mask[i * vs.T + j]) continue;
      const std::size_t ts = j;
      const std::size_t te = j + i + 1;
      const std::size_t te_idx = std::min(te, vs.T - 1);
      const double match = vs.m_cls[i * vs.T + j] * vs.m_reg[i * vs.T + j];
      const double score = vs.p_start[ts] * vs.p_end[te_idx] *
                           std::pow(match, cfg.gamma);
      props.push_back(Proposal{ts * invT, te * invT, score});
    }
  }
  return props;
}

std::vector<Proposal> filter_boundaries(const std::vector<Proposal>& props,
                                        const std::vector<double>& p_start,
                                        const std::vector<double>& p_end) {
  if (p_start.empty() || p_end.empty()) {
    throw ShapeError("filter_boundaries: empty probability vectors");
  }
  const double half_s = 0.5 * *std::max_element(p_start.begin(), p_start.end());
  const double half_e = 0.5 * *std::max_element(p_end.begin(), p_end.end());
  const std::size_t T = p_start.size();
  std::vector<Proposal> kept;
  kept.reserve(props.size());
  for (const Proposal& p : props) {
    const std::size_t ts =
        static_cast<std::size_t>(std::llround(p.start * static_cast<double>(T)));
    const std::size_t te = std::min(
        static_cast<std::size_t>(std::llround(p.end * static_cast<double>(T))),
        T - 1);
    if (p_start[ts] >= half_s && p_end[te] >= half_e) kept.push_back(p);
  }
  return kept;
}

namespace {

bool better(const Proposal& a, const Proposal& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.start != b.start) return a.start < b.start;
  return (a.end - a.start) < (b.end - b.start);
}

}  // namespace

std::vector<Proposal> soft_nms(std::vector<Proposal> pool,
                               const FusionConfig& cfg) {
  std::vector<Proposal> selected;
  selected.reserve(pool.size());
  while (!pool.empty()) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < pool.size(); ++i) {
      if (better(pool[i], pool[best])) best = i;
    }
    const Proposal top = pool[best];
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(best));
    selected.push_back(top);
    for (Proposal& p : pool) {
      const double tiou = labels::iou({top.start, top.end}, {p.start, p.end});
      if (cfg.snms_mode == FusionConfig::SnmsMode::Gaussian) {
        p.score *= std::exp(-(tiou * tiou) / cfg.snms_sigma);
      } else if (tiou > cfg.snms_threshold) {
        p.score *= 1.0 - tiou;
      }
    }
  }
  std::sort(selected.begin(), selected.end(), better);
  if (selected.size() > cfg.n_final) selected.resize(cfg.n_final);
  return selected;
}

std::vector<Proposal> generate_proposals(const VideoScores& vs,
                                         const FusionConfig& cfg) {
  std::vector<Proposal> props = fuse_scores(vs, cfg);
  props = filter_boundaries(props, vs.p_start, vs.p_end);
  return soft_nms(std::move(props), cfg);
}

void write_proposals_json(
    const std::filesystem::path& p,
    const std::map<std::string, std::vector<Proposal>>& proposals,
    const std::map<std::string, double>& durations) {
  nlohmann::ordered_json root;
  for (const auto& [vid, props] : proposals) {
    const auto it = durations.find(vid);
    if (it == durations.end()) {
      throw ConfigError("proposals: missing duration for video " + vid);
    }
    const double dur = it->second;
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const Proposal& prop : props) {
      nlohmann::ordered_json entry;
      entry["segment"] = {prop.start * dur, prop.end * dur};
      entry["score"] = prop.score;
      arr.push_back(std::move(entry));
    }
    root[vid] = std::move(arr);
  }
  std::ofstream os(p);
  if (!os) throw ConfigError("proposals: cannot open " + p.string());
  os << root.dump(2) << "\n";
}

}  // namespace dcan::infer
