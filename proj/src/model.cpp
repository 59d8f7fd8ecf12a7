#include "dcan/model.hpp"

#include <cmath>
#include <string>

#include "dcan/errors.hpp"
#include "dcan/labels.hpp"

namespace dcan::model {

namespace {

bool is_power_of_two(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

}  // namespace

void ModelConfig::validate() const {
  if (T < 2) throw ConfigError("model: T must be >= 2");
  if (D < 1 || D > T) throw ConfigError("model: need 1 <= D <= T");
  if (!is_power_of_two(group_size)) {
    throw ConfigError("model: group_size must be a power of two");
  }
  if (T % group_size != 0 || D % group_size != 0) {
    throw ConfigError("model: T and D must be divisible by group_size");
  }
  if (r_smooth % 2 == 0) {
    throw ConfigError("model: r_smooth must be odd (coprime with the 2^k "
                      "expansion dilations)");
  }
  if (n_base < 1 || n_b < 1) throw ConfigError("model: n_base and n_b must be >= 1");
  if (n_sample < 2) throw ConfigError("model: n_sample must be >= 2");
  if (rgb_dim < 1 || flow_dim < 1 || base_channels < 1 || c_group < 1 ||
      c_hidden < 1) {
    throw ConfigError("model: channel counts must be positive");
  }
}

DilationSchedule DilationSchedule::make(std::size_t n_b, std::size_t r_smooth,
                                        bool include_smooth) {
  DilationSchedule s;
  std::size_t dilation = 2;
  for (std::size_t i = 1; i <= n_b; ++i) {
    s.entries.push_back({ScheduleEntry::Kind::Expand, dilation});
    if (include_smooth) {
      s.entries.push_back({ScheduleEntry::Kind::Smooth, r_smooth});
    }
    dilation *= 2;
  }
  return s;
}

void DilationSchedule::validate() const {
  if (entries.empty()) throw ConfigError("schedule: empty");
  bool has_smooth = false;
  for (const auto& e : entries) {
    has_smooth = has_smooth || e.kind == ScheduleEntry::Kind::Smooth;
  }
  std::size_t expect_dilation = 2;
  std::size_t smooth_dilation = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (has_smooth) {
      const auto expect_kind = (i % 2 == 0) ? ScheduleEntry::Kind::Expand
                                            : ScheduleEntry::Kind::Smooth;
      if (e.kind != expect_kind) {
        throw ConfigError("schedule: kinds must alternate E, S, E, S, ...");
      }
    }
    if (e.kind == ScheduleEntry::Kind::Expand) {
      if (e.dilation != expect_dilation) {
        throw ConfigError("schedule: E dilations must be 2^i in order");
      }
      expect_dilation *= 2;
    } else {
      if (smooth_dilation == 0) smooth_dilation = e.dilation;
      if (e.dilation != smooth_dilation) {
        throw ConfigError("schedule: all S dilations must equal r_smooth");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Group sampling

Tensor group_sample(const Tensor& f_p, const ModelConfig& cfg) {
  if (f_p.rank() != 3) {
    throw ShapeError("group_sample: expected [B, C, T], got " +
                     shape_str(f_p.shape()));
  }
  const std::size_t B = f_p.shape()[0], C = f_p.shape()[1], T = f_p.shape()[2];
  if (T != cfg.T) {
    throw ShapeError("group_sample: temporal length " + std::to_string(T) +
                     " != configured T " + std::to_string(cfg.T));
  }
  const std::size_t G = cfg.group_size;
  const std::size_t Dg = cfg.D / G, Tg = cfg.T / G, S = cfg.n_sample;

  // Interpolation taps per (group row, group col, sample): two grid reads.
  struct Tap {
    std::size_t i0, i1;
    double w0, w1;
  };
  std::vector<Tap> taps(Dg * Tg * S);
  std::vector<std::uint8_t> group_valid(Dg * Tg, 0);
  const double invT = 1.0 / static_cast<double>(T);
  for (std::size_t gi = 0; gi < Dg; ++gi) {
    for (std::size_t gj = 0; gj < Tg; ++gj) {
      // e = (gj*G + (gi+1)*G)/T; exact integer validity check.
      if (G * (gi + gj + 1) > T) continue;
      group_valid[gi * Tg + gj] = 1;
      const double s = static_cast<double>(gj * G) * invT;
      const double e = s + static_cast<double>((gi + 1) * G) * invT;
      for (std::size_t k = 0; k < S; ++k) {
        const double frac = static_cast<double>(k) / static_cast<double>(S - 1);
        const double pos = (s + (e - s) * frac) * static_cast<double>(T - 1);
        std::size_t i0 = static_cast<std::size_t>(pos);
        if (i0 > T - 2) i0 = T - 2;
        const double w1 = pos - static_cast<double>(i0);
        taps[(gi * Tg + gj) * S + k] = Tap{i0, i0 + 1, 1.0 - w1, w1};
      }
    }
  }

  Tensor out(Shape{B, Dg, Tg, C, S});
  const double* px = f_p.data();
  double* po = out.data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t g = 0; g < Dg * Tg; ++g) {
      if (!group_valid[g]) continue;  // stays zero-filled
      const Tap* gtap = taps.data() + g * S;
      for (std::size_t c = 0; c < C; ++c) {
        const double* frow = px + (b * C + c) * T;
        double* orow = po + ((b * Dg * Tg + g) * C + c) * S;
        for (std::size_t k = 0; k < S; ++k) {
          const Tap& t = gtap[k];
          orow[k] = t.w0 * frow[t.i0] + t.w1 * frow[t.i1];
        }
      }
    }
  }

  if (Graph::current() != nullptr && f_p.requires_grad()) {
    out.set_requires_grad(true);
    auto xi = f_p.impl(), oi = out.impl();
    Graph::current()->record(
        oi, [xi, oi, B, C, T, Dg, Tg, S, taps = std::move(taps),
             group_valid = std::move(group_valid)]() {
          xi->ensure_grad();
          const double* g = oi->grad.data();
          double* gx = xi->grad.data();
          for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t grp = 0; grp < Dg * Tg; ++grp) {
              if (!group_valid[grp]) continue;
              const Tap* gtap = taps.data() + grp * S;
              for (std::size_t c = 0; c < C; ++c) {
                double* grow = gx + (b * C + c) * T;
                const double* orow = g + ((b * Dg * Tg + grp) * C + c) * S;
                for (std::size_t k = 0; k < S; ++k) {
                  const Tap& t = gtap[k];
                  grow[t.i0] += t.w0 * orow[k];
                  grow[t.i1] += t.w1 * orow[k];
                }
              }
            }
          }
        });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model

MptcBlock::MptcBlock(nn::ParamStore& params, const std::string& name,
                     std::size_t channels, std::size_t dilation)
    : conv_long(params, name + ".conv_long", channels, channels, 3,
                static_cast<int>(dilation)),
      conv_short(params, name + ".conv_short", channels, channels, 3, 1),
      norm_long(params, name + ".norm_long", channels),
      norm_short(params, name + ".norm_short", channels),
      norm_in(params, name + ".norm_in", channels) {}

Tensor MptcBlock::forward(const Tensor& x) const {
  Tensor long_path = norm_long.forward(conv_long.forward(x));
  Tensor short_path = norm_short.forward(conv_short.forward(x));
  Tensor shortcut = norm_in.forward(x);
  return nn::relu(long_path + short_path + shortcut);
}

DcanModel::DcanModel(const ModelConfig& cfg, nn::ParamStore& params)
    : cfg_(cfg) {
  cfg_.validate();
  schedule_ = DilationSchedule::make(cfg_.n_b, cfg_.r_smooth, cfg_.mptc_smooth);
  schedule_.validate();

  const std::size_t C = cfg_.base_channels;
  for (std::size_t i = 0; i < cfg_.n_base; ++i) {
    const std::size_t rgb_in = i == 0 ? cfg_.rgb_dim : C;
    const std::size_t flow_in = i == 0 ? cfg_.flow_dim : C;
    rgb_path_.emplace_back(params, "base.rgb." + std::to_string(i), rgb_in, C, 3, 1);
    flow_path_.emplace_back(params, "base.flow." + std::to_string(i), flow_in, C, 3, 1);
  }

  const std::size_t Cm = 2 * C;  // concatenated stream width
  for (std::size_t i = 0; i < schedule_.entries.size(); ++i) {
    mptc_.emplace_back(params, "mtca." + std::to_string(i), Cm,
                       schedule_.entries[i].dilation);
  }
  boundary_head_ = nn::Conv1d(params, "mtca.head", Cm, 2, 3, 1);

  cfm_reduce_ = nn::Conv1d(params, "cfm.reduce", Cm, C, 3, 1);
  group_linear_ = nn::Linear(params, "cfm.group_linear", C * cfg_.n_sample,
                             cfg_.c_group);

  // log2(G) upsampling stages; channels interpolate geometrically from
  // c_group down to c_hidden.
  std::size_t stages = 0;
  for (std::size_t g = cfg_.group_size; g > 1; g /= 2) ++stages;
  std::size_t in_ch = cfg_.c_group;
  for (std::size_t s = 1; s <= stages; ++s) {
    const double frac = static_cast<double>(s) / static_cast<double>(stages);
    std::size_t out_ch = static_cast<std::size_t>(std::lround(
        std::pow(static_cast<double>(cfg_.c_group), 1.0 - frac) *
        std::pow(static_cast<double>(cfg_.c_hidden), frac)));
    if (out_ch < 1) out_ch = 1;
    refine_up_.emplace_back(params, "cfm.up." + std::to_string(s - 1), in_ch,
                            out_ch);
    in_ch = out_ch;
  }
  refine_conv_ = nn::Conv2d(params, "cfm.conv", in_ch, cfg_.c_hidden, 3);
  match_head_ = nn::Conv2d(params, "cfm.head", cfg_.c_hidden, 2, 1);
}

Tensor DcanModel::base_forward(const Tensor& rgb, const Tensor& flow) const {
  if (rgb.rank() != 3 || flow.rank() != 3) {
    throw ShapeError("base_forward: expected [B, C, T] streams");
  }
  if (rgb.shape()[0] != flow.shape()[0]) {
    throw ShapeError("base_forward: batch size mismatch between streams");
  }
  if (rgb.shape()[2] != flow.shape()[2]) {
    throw ShapeError("base_forward: stream length mismatch, rgb T=" +
                     std::to_string(rgb.shape()[2]) + " flow T=" +
                     std::to_string(flow.shape()[2]));
  }
  Tensor r = rgb;
  for (const nn::Conv1d& conv : rgb_path_) r = nn::relu(conv.forward(r));
  Tensor f = flow;
  for (const nn::Conv1d& conv : flow_path_) f = nn::relu(conv.forward(f));
  return concat({r, f}, 1);
}

std::pair<Tensor, Tensor> DcanModel::mtca_forward(const Tensor& f) const {
  Tensor x = f;
  for (const MptcBlock& block : mptc_) x = block.forward(x);
  Tensor head = nn::sigmoid(boundary_head_.forward(x));  // [B, 2, T]
  return {select(head, 1, 0), select(head, 1, 1)};
}

std::pair<Tensor, Tensor> DcanModel::cfm_forward(const Tensor& f) const {
  const std::size_t B = f.shape()[0];
  const std::size_t G = cfg_.group_size;
  const std::size_t Dg = cfg_.D / G, Tg = cfg_.T / G;

  Tensor fp = nn::relu(cfm_reduce_.forward(f));      // [B, C, T]
  Tensor grp = group_sample(fp, cfg_);               // [B, Dg, Tg, C, S]
  Tensor flat = reshape(grp, {B * Dg * Tg, cfg_.base_channels * cfg_.n_sample});
  Tensor emb = group_linear_.forward(flat);          // [., c_group]
  Tensor m = reshape(emb, {B, Dg, Tg, cfg_.c_group});
  m = permute(m, {0, 3, 1, 2});                      // [B, c_group, Dg, Tg]
  for (const nn::Deconv2d& up : refine_up_) m = nn::relu(up.forward(m));
  m = nn::relu(refine_conv_.forward(m));
  m = nn::sigmoid(match_head_.forward(m));           // [B, 2, D, T]
  return {select(m, 1, 0), select(m, 1, 1)};
}

ForwardOutput DcanModel::forward(const Tensor& rgb, const Tensor& flow) const {
  Tensor base = base_forward(rgb, flow);
  auto [p_start, p_end] = mtca_forward(base);
  auto [m_cls, m_reg] = cfm_forward(base);
  ForwardOutput out;
  out.p_start = std::move(p_start);
  out.p_end = std::move(p_end);
  out.m_cls = std::move(m_cls);
  out.m_reg = std::move(m_reg);
  out.valid_mask = labels::make_valid_mask(cfg_.D, cfg_.T);
  return out;
}

}  // namespace dcan::model
