#include "dcan/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "dcan/errors.hpp"
#include "dcan/rng.hpp"

namespace dcan::data {

Tensor rescale_features(const Tensor& feats, std::size_t L) {
  if (feats.rank() != 2) {
    throw ShapeError("rescale: expected [T, C], got " + shape_str(feats.shape()));
  }
  const std::size_t T = feats.shape()[0], C = feats.shape()[1];
  if (T < 2) throw ShapeError("rescale: need at least two source snippets");
  if (L < 1) throw ShapeError("rescale: target length must be >= 1");
  Tensor out(Shape{L, C});
  const double* src = feats.data();
  double* dst = out.data();
  const double step = L > 1 ? static_cast<double>(T - 1) / static_cast<double>(L - 1)
                            : 0.0;
  for (std::size_t t = 0; t < L; ++t) {
    const double pos = static_cast<double>(t) * step;
    std::size_t i0 = static_cast<std::size_t>(pos);
    if (i0 > T - 2) i0 = T - 2;
    const double w1 = pos - static_cast<double>(i0);
    const double w0 = 1.0 - w1;
    const double* r0 = src + i0 * C;
    const double* r1 = src + (i0 + 1) * C;
    double* o = dst + t * C;
    for (std::size_t c = 0; c < C; ++c) o[c] = w0 * r0[c] + w1 * r1[c];
  }
  return out;
}

FeatureSequence rescale(const FeatureSequence& seq, std::size_t L) {
  FeatureSequence out;
  out.video_id = seq.video_id;
  out.rgb = rescale_features(seq.rgb, L);
  out.flow = rescale_features(seq.flow, L);
  out.frame_interval = seq.frame_interval;
  out.duration_seconds = seq.duration_seconds;
  return out;
}

std::vector<Window> window(const FeatureSequence& seq,
                           const labels::VideoAnnotation& ann,
                           std::size_t size, std::size_t stride,
                           bool training) {
  if (size < 1 || stride < 1) throw ShapeError("window: size/stride must be >= 1");
  const std::size_t T = seq.t_raw();
  const std::size_t C_rgb = seq.rgb.shape()[1], C_flow = seq.flow.shape()[1];
  std::vector<std::size_t> offsets;
  if (T <= size) {
    offsets.push_back(0);
  } else {
    for (std::size_t o = 0; o < T; o += stride) offsets.push_back(o);
  }

  const double sec_per_snippet = seq.duration_seconds / static_cast<double>(T);
  std::vector<Window> out;
  for (std::size_t o : offsets) {
    Window w;
    w.offset = o;
    w.features.video_id = seq.video_id;
    w.features.frame_interval = seq.frame_interval;
    w.features.duration_seconds = sec_per_snippet * static_cast<double>(size);
    w.features.rgb = Tensor(Shape{size, C_rgb});
    w.features.flow = Tensor(Shape{size, C_flow});
    const std::size_t avail = T > o ? std::min(size, T - o) : 0;
    std::copy(seq.rgb.data() + o * C_rgb,
              seq.rgb.data() + (o + avail) * C_rgb, w.features.rgb.data());
    std::copy(seq.flow.data() + o * C_flow,
              seq.flow.data() + (o + avail) * C_flow, w.features.flow.data());

    // Clip instances to the window span and renormalize over the window.
    const double lo = static_cast<double>(o);
    const double hi = static_cast<double>(o + size);
    w.annotations.duration_seconds = w.features.duration_seconds;
    for (const labels::Interval& inst : ann.instances) {
      const double s_raw = inst.start * static_cast<double>(T);
      const double e_raw = inst.end * static_cast<double>(T);
      const double cs = std::max(s_raw, lo);
      const double ce = std::min(e_raw, hi);
      if (ce > cs) {
        w.annotations.instances.push_back(
            {(cs - lo) / static_cast<double>(size),
             (ce - lo) / static_cast<double>(size)});
      }
    }
    if (training && w.annotations.instances.empty()) continue;
    out.push_back(std::move(w));
  }
  return out;
}

void SyntheticSpec::validate() const {
  if (n_videos < 1) throw ConfigError("synthetic: n_videos must be >= 1");
  if (t_raw_min < 8 || t_raw_max < t_raw_min) {
    throw ConfigError("synthetic: bad t_raw range");
  }
  if (instances_min < 1 || instances_max < instances_min) {
    throw ConfigError("synthetic: bad instance count range");
  }
  if (duration_frac_min <= 0.0 || duration_frac_max > 0.9 ||
      duration_frac_max < duration_frac_min) {
    throw ConfigError("synthetic: duration fractions must lie in (0, 0.9]");
  }
  if (pattern_channels < 1 || rgb_dim < pattern_channels ||
      flow_dim < 2 * pattern_channels) {
    throw ConfigError("synthetic: need rgb_dim >= P and flow_dim >= 2P for "
                      "disjoint pattern channels");
  }
  if (noise_level <= 0.0) throw ConfigError("synthetic: noise_level must be > 0");
}

namespace {

// Non-overlapping snippet-aligned instances, >= 1 snippet apart.
std::vector<std::pair<std::size_t, std::size_t>> place_instances(
    Rng& rng, std::size_t t_raw, std::size_t count, double frac_min,
    double frac_max) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::vector<std::pair<std::size_t, std::size_t>> placed;
    bool ok = true;
    for (std::size_t i = 0; i < count && ok; ++i) {
      const double frac = rng.uniform(frac_min, frac_max);
      std::size_t len = static_cast<std::size_t>(
          std::llround(frac * static_cast<double>(t_raw)));
      len = std::max<std::size_t>(len, 2);
      if (len + 2 >= t_raw) {
        ok = false;
        break;
      }
      const std::size_t start =
          1 + rng.uniform_index(t_raw - len - 2);  // keep off the clip edges
      const std::size_t end = start + len;
      for (const auto& [s, e] : placed) {
        if (start < e + 1 && s < end + 1) {
          ok = false;
          break;
        }
      }
      if (ok) placed.emplace_back(start, end);
    }
    if (ok && placed.size() == count) {
      std::sort(placed.begin(), placed.end());
      return placed;
    }
  }
  throw ConfigError("synthetic: could not pack instances (infeasible spec)");
}

}  // namespace

Corpus generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Corpus corpus;
  for (std::size_t v = 0; v < spec.n_videos; ++v) {
    Rng rng(Rng::derive(spec.seed, v));
    const std::size_t t_raw = static_cast<std::size_t>(
        rng.uniform_int(static_cast<long long>(spec.t_raw_min),
                        static_cast<long long>(spec.t_raw_max)));
    const std::size_t count = static_cast<std::size_t>(
        rng.uniform_int(static_cast<long long>(spec.instances_min),
                        static_cast<long long>(spec.instances_max)));
    const auto placed = place_instances(rng, t_raw, count,
                                        spec.duration_frac_min,
                                        spec.duration_frac_max);

    FeatureSequence seq;
    seq.video_id = "synthetic_" + std::to_string(v);
    seq.duration_seconds = static_cast<double>(t_raw);  // 1 s per snippet
    seq.rgb = Tensor(Shape{t_raw, spec.rgb_dim});
    seq.flow = Tensor(Shape{t_raw, spec.flow_dim});
    for (std::size_t i = 0; i < seq.rgb.size(); ++i) {
      seq.rgb[i] = spec.noise_level * rng.gaussian();
    }
    for (std::size_t i = 0; i < seq.flow.size(); ++i) {
      seq.flow[i] = spec.noise_level * rng.gaussian();
    }

    labels::VideoAnnotation ann;
    ann.duration_seconds = seq.duration_seconds;
    const std::size_t P = spec.pattern_channels;
    for (const auto& [s, e] : placed) {
      for (std::size_t t = s; t < e; ++t) {
        // Linear on/off ramps of width 2 snippets at the boundaries.
        const double edge = static_cast<double>(std::min(t - s, e - 1 - t));
        const double amp = 2.0 * std::min(1.0, (edge + 1.0) / 2.0);
        for (std::size_t c = 0; c < P; ++c) {
          seq.rgb[t * spec.rgb_dim + c] += amp;
          seq.flow[t * spec.flow_dim + P + c] += amp;
        }
      }
      ann.instances.push_back({static_cast<double>(s) / t_raw,
                               static_cast<double>(e) / t_raw});
    }
    corpus.annotations.emplace(seq.video_id, std::move(ann));
    corpus.videos.push_back(std::move(seq));
  }
  return corpus;
}

SyntheticSpec SyntheticSpec::from_json_file(const std::filesystem::path& p) {
  std::ifstream is(p);
  if (!is) throw ConfigError("synthetic spec: cannot open " + p.string());
  nlohmann::json j = nlohmann::json::parse(is, nullptr, true);
  SyntheticSpec s;
  s.n_videos = j.value("n_videos", s.n_videos);
  s.t_raw_min = j.value("t_raw_min", s.t_raw_min);
  s.t_raw_max = j.value("t_raw_max", s.t_raw_max);
  s.instances_min = j.value("instances_min", s.instances_min);
  s.instances_max = j.value("instances_max", s.instances_max);
  s.duration_frac_min = j.value("duration_frac_min", s.duration_frac_min);
  s.duration_frac_max = j.value("duration_frac_max", s.duration_frac_max);
  s.rgb_dim = j.value("rgb_dim", s.rgb_dim);
  s.flow_dim = j.value("flow_dim", s.flow_dim);
  s.pattern_channels = j.value("pattern_channels", s.pattern_channels);
  s.noise_level = j.value("noise_level", s.noise_level);
  s.seed = j.value("seed", s.seed);
  s.validate();
  return s;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json manifest;
  for (const FeatureSequence& seq : corpus.videos) {
    const std::string rgb_name = seq.video_id + "_rgb.bin";
    const std::string flow_name = seq.video_id + "_flow.bin";
    seq.rgb.save_file(dir / rgb_name);
    seq.flow.save_file(dir / flow_name);
    const auto it = corpus.annotations.find(seq.video_id);
    nlohmann::ordered_json anns = nlohmann::ordered_json::array();
    if (it != corpus.annotations.end()) {
      for (const labels::Interval& inst : it->second.instances) {
        anns.push_back({{"segment",
                         {inst.start * seq.duration_seconds,
                          inst.end * seq.duration_seconds}}});
      }
    }
    manifest[seq.video_id] = {{"duration", seq.duration_seconds},
                              {"t_raw", seq.t_raw()},
                              {"frame_interval", seq.frame_interval},
                              {"rgb_path", rgb_name},
                              {"flow_path", flow_name},
                              {"annotations", anns}};
  }
  std::ofstream os(dir / "manifest.json");
  if (!os) throw ConfigError("corpus: cannot open manifest for writing");
  os << manifest.dump(2) << "\n";
}

Corpus load_corpus(const std::filesystem::path& manifest_or_dir) {
  std::filesystem::path manifest = manifest_or_dir;
  if (std::filesystem::is_directory(manifest)) manifest /= "manifest.json";
  std::ifstream is(manifest);
  if (!is) throw ConfigError("corpus: cannot open " + manifest.string());
  const std::filesystem::path dir = manifest.parent_path();
  nlohmann::json root = nlohmann::json::parse(is, nullptr, true);

  Corpus corpus;
  for (auto it = root.begin(); it != root.end(); ++it) {
    const nlohmann::json& v = it.value();
    FeatureSequence seq;
    seq.video_id = it.key();
    seq.duration_seconds = v.at("duration").get<double>();
    seq.frame_interval = v.value("frame_interval", 1.0);
    seq.rgb = Tensor::load_file(dir / v.at("rgb_path").get<std::string>());
    seq.flow = Tensor::load_file(dir / v.at("flow_path").get<std::string>());
    if (seq.rgb.rank() != 2 || seq.flow.rank() != 2 ||
        seq.rgb.shape()[0] != seq.flow.shape()[0]) {
      throw ConfigError("corpus: malformed feature tensors for " + it.key());
    }
    const std::size_t t_raw = v.at("t_raw").get<std::size_t>();
    if (seq.t_raw() != t_raw) {
      throw ConfigError("corpus: t_raw mismatch for " + it.key());
    }

    labels::VideoAnnotation ann;
    ann.duration_seconds = seq.duration_seconds;
    for (const auto& a : v.value("annotations", nlohmann::json::array())) {
      const auto& seg = a.at("segment");
      double s = seg.at(0).get<double>() / seq.duration_seconds;
      double e = seg.at(1).get<double>() / seq.duration_seconds;
      s = std::clamp(s, 0.0, 1.0);
      e = std::clamp(e, 0.0, 1.0);
      if (e > s) ann.instances.push_back({s, e});
    }
    corpus.annotations.emplace(seq.video_id, std::move(ann));
    corpus.videos.push_back(std::move(seq));
  }
  return corpus;
}

}  // namespace dcan::data
