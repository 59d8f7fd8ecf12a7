#include "dcan/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "dcan/errors.hpp"

namespace dcan::nn {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// ParamStore

ParamStore::ParamStore(std::uint64_t seed) : rng_(seed) {}

Tensor ParamStore::create(const std::string& name, Shape shape,
                          const std::string& layer_type, std::size_t fan_in) {
  if (loaded_) return take_loaded(name, shape, layer_type);
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = rng_.uniform(-bound, bound);
  }
  t.set_requires_grad(true);
  entries_.push_back(Entry{name, layer_type, t});
  return t;
}

Tensor ParamStore::create_const(const std::string& name, Shape shape,
                                const std::string& layer_type, double value) {
  if (loaded_) return take_loaded(name, shape, layer_type);
  Tensor t(shape, value);
  t.set_requires_grad(true);
  entries_.push_back(Entry{name, layer_type, t});
  return t;
}

Tensor ParamStore::take_loaded(const std::string& name, const Shape& shape,
                               const std::string& layer_type) {
  if (next_loaded_ >= entries_.size()) {
    throw ConfigError("checkpoint: missing parameter '" + name + "'");
  }
  Entry& e = entries_[next_loaded_++];
  if (e.name != name) {
    throw ConfigError("checkpoint: expected parameter '" + name + "', found '" +
                      e.name + "' (model/config mismatch)");
  }
  if (e.tensor.shape() != shape) {
    throw ConfigError("checkpoint: parameter '" + name + "' has shape " +
                      shape_str(e.tensor.shape()) + ", model expects " +
                      shape_str(shape));
  }
  if (e.layer_type != layer_type) {
    throw ConfigError("checkpoint: parameter '" + name + "' layer type '" +
                      e.layer_type + "' != '" + layer_type + "'");
  }
  return e.tensor;
}

std::vector<Tensor> ParamStore::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const Entry& e : entries_) out.push_back(e.tensor);
  return out;
}

void ParamStore::zero_grads() {
  for (Entry& e : entries_) e.tensor.zero_grad();
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const Entry& e : entries_) n += e.tensor.size();
  return n;
}

void ParamStore::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["format"] = "dcan-checkpoint";
  manifest["version"] = 1;
  json params = json::array();
  for (const Entry& e : entries_) {
    json p;
    p["name"] = e.name;
    p["layer_type"] = e.layer_type;
    p["shape"] = e.tensor.shape();
    params.push_back(p);
  }
  manifest["params"] = params;
  {
    std::ofstream os(dir / "manifest.json");
    if (!os) throw ConfigError("checkpoint save: cannot open manifest.json");
    os << manifest.dump(2) << "\n";
  }
  {
    std::ofstream os(dir / "params.bin", std::ios::binary);
    if (!os) throw ConfigError("checkpoint save: cannot open params.bin");
    for (const Entry& e : entries_) e.tensor.save(os);
  }
}

ParamStore ParamStore::load(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) {
    throw ConfigError("checkpoint load: cannot open " +
                      (dir / "manifest.json").string());
  }
  json manifest = json::parse(mf, nullptr, true);
  if (manifest.value("format", "") != "dcan-checkpoint") {
    throw ConfigError("checkpoint load: unrecognized manifest format");
  }
  std::ifstream bs(dir / "params.bin", std::ios::binary);
  if (!bs) {
    throw ConfigError("checkpoint load: cannot open " +
                      (dir / "params.bin").string());
  }
  ParamStore store;
  store.loaded_ = true;
  for (const json& p : manifest.at("params")) {
    Tensor t = Tensor::load(bs);
    const Shape expect = p.at("shape").get<Shape>();
    if (t.shape() != expect) {
      throw ConfigError("checkpoint load: tensor '" +
                        p.at("name").get<std::string>() +
                        "' shape disagrees with manifest");
    }
    t.set_requires_grad(true);
    store.entries_.push_back(Entry{p.at("name").get<std::string>(),
                                   p.at("layer_type").get<std::string>(), t});
  }
  return store;
}

// ---------------------------------------------------------------------------
// Activations

Tensor relu(const Tensor& x) {
  Tensor out(x.shape());
  const double* px = x.data();
  double* po = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) po[i] = px[i] > 0.0 ? px[i] : 0.0;
  if (Graph::current() != nullptr && x.requires_grad()) {
    out.set_requires_grad(true);
    auto xi = x.impl(), oi = out.impl();
    Graph::current()->record(oi, [xi, oi]() {
      xi->ensure_grad();
      const double* g = oi->grad.data();
      const double* dx = xi->data.data();
      double* gx = xi->grad.data();
      for (std::size_t i = 0; i < xi->data.size(); ++i) {
        if (dx[i] > 0.0) gx[i] += g[i];
      }
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out(x.shape());
  const double* px = x.data();
  double* po = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) po[i] = 1.0 / (1.0 + std::exp(-px[i]));
  if (Graph::current() != nullptr && x.requires_grad()) {
    out.set_requires_grad(true);
    auto xi = x.impl(), oi = out.impl();
    Graph::current()->record(oi, [xi, oi]() {
      xi->ensure_grad();
      const double* g = oi->grad.data();
      const double* s = oi->data.data();
      double* gx = xi->grad.data();
      for (std::size_t i = 0; i < xi->data.size(); ++i) {
        gx[i] += g[i] * s[i] * (1.0 - s[i]);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Conv1d

Conv1d::Conv1d(ParamStore& params, const std::string& name, std::size_t c_in,
               std::size_t c_out, int kernel, int dilation)
    : kernel(kernel), dilation(dilation) {
  if (kernel % 2 == 0 || kernel < 1) {
    throw ConfigError("conv1d: kernel must be odd, got " + std::to_string(kernel));
  }
  if (dilation < 1) {
    throw ConfigError("conv1d: dilation must be >= 1");
  }
  weight = params.create(name + ".weight",
                         {c_out, c_in, static_cast<std::size_t>(kernel)},
                         "conv1d", c_in * kernel);
  bias = params.create_const(name + ".bias", {c_out}, "conv1d", 0.0);
}

Tensor Conv1d::forward(const Tensor& x) const {
  if (x.rank() != 3) {
    throw ShapeError("conv1d: expected [B, C, T], got " + shape_str(x.shape()));
  }
  const std::size_t B = x.shape()[0], C_in = x.shape()[1], T = x.shape()[2];
  const std::size_t C_out = weight.shape()[0];
  if (weight.shape()[1] != C_in) {
    throw ShapeError("conv1d: input has " + std::to_string(C_in) +
                     " channels, layer expects " +
                     std::to_string(weight.shape()[1]));
  }
  const int k = kernel;
  const int half = k / 2;
  const int Ti = static_cast<int>(T);

  Tensor out(Shape{B, C_out, T});
  const double* px = x.data();
  const double* pw = weight.data();
  const double* pb = bias.data();
  double* po = out.data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t co = 0; co < C_out; ++co) {
      double* orow = po + (b * C_out + co) * T;
      for (std::size_t t = 0; t < T; ++t) orow[t] = pb[co];
      for (std::size_t ci = 0; ci < C_in; ++ci) {
        const double* xrow = px + (b * C_in + ci) * T;
        const double* wk = pw + (co * C_in + ci) * k;
        for (int kk = 0; kk < k; ++kk) {
          const int off = (kk - half) * dilation;
          const double wv = wk[kk];
          if (wv == 0.0) continue;
          const int lo = off < 0 ? -off : 0;
          const int hi = off > 0 ? Ti - off : Ti;
          for (int t = lo; t < hi; ++t) orow[t] += wv * xrow[t + off];
        }
      }
    }
  }

  const bool want = Graph::current() != nullptr &&
                    (x.requires_grad() || weight.requires_grad() ||
                     bias.requires_grad());
  if (want) {
    out.set_requires_grad(true);
    auto xi = x.impl(), wi = weight.impl(), bi = bias.impl(), oi = out.impl();
    const int dil = dilation;
    Graph::current()->record(oi, [xi, wi, bi, oi, B, C_in, C_out, T, k, half,
                                  dil, Ti]() {
      const double* g = oi->grad.data();
      const double* px = xi->data.data();
      const double* pw = wi->data.data();
      if (bi->requires_grad) {
        bi->ensure_grad();
        double* gb = bi->grad.data();
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t co = 0; co < C_out; ++co) {
            const double* grow = g + (b * C_out + co) * T;
            double acc = 0.0;
            for (std::size_t t = 0; t < T; ++t) acc += grow[t];
            gb[co] += acc;
          }
        }
      }
      if (wi->requires_grad) {
        wi->ensure_grad();
        double* gw = wi->grad.data();
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t co = 0; co < C_out; ++co) {
            const double* grow = g + (b * C_out + co) * T;
            for (std::size_t ci = 0; ci < C_in; ++ci) {
              const double* xrow = px + (b * C_in + ci) * T;
              double* gwk = gw + (co * C_in + ci) * k;
              for (int kk = 0; kk < k; ++kk) {
                const int off = (kk - half) * dil;
                const int lo = off < 0 ? -off : 0;
                const int hi = off > 0 ? Ti - off : Ti;
                double acc = 0.0;
                for (int t = lo; t < hi; ++t) acc += grow[t] * xrow[t + off];
                gwk[kk] += acc;
              }
            }
          }
        }
      }
      if (xi->requires_grad) {
        xi->ensure_grad();
        double* gx = xi->grad.data();
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t co = 0; co < C_out; ++co) {
            const double* grow = g + (b * C_out + co) * T;
            for (std::size_t ci = 0; ci < C_in; ++ci) {
              double* gxrow = gx + (b * C_in + ci) * T;
              const double* wk = pw + (co * C_in + ci) * k;
              for (int kk = 0; kk < k; ++kk) {
                const int off = (kk - half) * dil;
                const double wv = wk[kk];
                if (wv == 0.0) continue;
                const int lo = off < 0 ? -off : 0;
                const int hi = off > 0 ? Ti - off : Ti;
                for (int t = lo; t < hi; ++t) gxrow[t + off] += wv * grow[t];
              }
            }
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Norm

Norm::Norm(ParamStore& params, const std::string& name, std::size_t channels) {
  scale = params.create_const(name + ".scale", {channels}, "norm", 1.0);
  shift = params.create_const(name + ".shift", {channels}, "norm", 0.0);
}

Tensor Norm::forward(const Tensor& x) const {
  if (x.rank() != 3) {
    throw ShapeError("norm: expected [B, C, T], got " + shape_str(x.shape()));
  }
  const std::size_t B = x.shape()[0], C = x.shape()[1], T = x.shape()[2];
  if (C != scale.shape()[0]) {
    throw ShapeError("norm: channel mismatch");
  }
  if (T < 2) {
    throw ShapeError("norm: temporal length must be >= 2 (degenerate variance)");
  }
  Tensor out(x.shape());
  // Cached per (b, c) for the backward pass.
  std::vector<double> means(B * C), inv_stds(B * C);
  const double* px = x.data();
  const double* psc = scale.data();
  const double* psh = shift.data();
  double* po = out.data();
  const double invT = 1.0 / static_cast<double>(T);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      const double* row = px + (b * C + c) * T;
      double mean = 0.0;
      for (std::size_t t = 0; t < T; ++t) mean += row[t];
      mean *= invT;
      double var = 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        const double d = row[t] - mean;
        var += d * d;
      }
      var *= invT;
      const double inv_std = 1.0 / std::sqrt(var + epsilon);
      means[b * C + c] = mean;
      inv_stds[b * C + c] = inv_std;
      double* orow = po + (b * C + c) * T;
      for (std::size_t t = 0; t < T; ++t) {
        orow[t] = psc[c] * (row[t] - mean) * inv_std + psh[c];
      }
    }
  }

  const bool want = Graph::current() != nullptr &&
                    (x.requires_grad() || scale.requires_grad() ||
                     shift.requires_grad());
  if (want) {
    out.set_requires_grad(true);
    auto xi = x.impl(), sci = scale.impl(), shi = shift.impl(), oi = out.impl();
    Graph::current()->record(
        oi, [xi, sci, shi, oi, B, C, T, invT, means = std::move(means),
             inv_stds = std::move(inv_stds)]() {
          const double* g = oi->grad.data();
          const double* px = xi->data.data();
          const double* psc = sci->data.data();
          if (shi->requires_grad) shi->ensure_grad();
          if (sci->requires_grad) sci->ensure_grad();
          if (xi->requires_grad) xi->ensure_grad();
          for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t c = 0; c < C; ++c) {
              const double mean = means[b * C + c];
              const double inv_std = inv_stds[b * C + c];
              const double* row = px + (b * C + c) * T;
              const double* grow = g + (b * C + c) * T;
              double sum_g = 0.0, sum_gxh = 0.0;
              for (std::size_t t = 0; t < T; ++t) {
                const double xh = (row[t] - mean) * inv_std;
                sum_g += grow[t];
                sum_gxh += grow[t] * xh;
              }
              if (shi->requires_grad) shi->grad[c] += sum_g;
              if (sci->requires_grad) sci->grad[c] += sum_gxh;
              if (xi->requires_grad) {
                double* gxrow = xi->grad.data() + (b * C + c) * T;
                const double sc = psc[c];
                const double mg = sc * sum_g * invT;
                const double mgx = sc * sum_gxh * invT;
                for (std::size_t t = 0; t < T; ++t) {
                  const double xh = (row[t] - mean) * inv_std;
                  gxrow[t] += inv_std * (sc * grow[t] - mg - xh * mgx);
                }
              }
            }
          }
        });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(ParamStore& params, const std::string& name, std::size_t c_in,
               std::size_t c_out, int kernel)
    : kernel(kernel) {
  if (kernel % 2 == 0 || kernel < 1) {
    throw ConfigError("conv2d: kernel must be odd");
  }
  weight = params.create(name + ".weight",
                         {c_out, c_in, static_cast<std::size_t>(kernel),
                          static_cast<std::size_t>(kernel)},
                         "conv2d", c_in * kernel * kernel);
  bias = params.create_const(name + ".bias", {c_out}, "conv2d", 0.0);
}

Tensor Conv2d::forward(const Tensor& x) const {
  if (x.rank() != 4) {
    throw ShapeError("conv2d: expected [B, C, H, W], got " +
                     shape_str(x.shape()));
  }
  const std::size_t B = x.shape()[0], C_in = x.shape()[1], H = x.shape()[2],
                    W = x.shape()[3];
  const std::size_t C_out = weight.shape()[0];
  if (weight.shape()[1] != C_in) {
    throw ShapeError("conv2d: channel mismatch");
  }
  const int k = kernel, half = k / 2;
  const int Hi = static_cast<int>(H), Wi = static_cast<int>(W);

  Tensor out(Shape{B, C_out, H, W});
  const double* px = x.data();
  const double* pw = weight.data();
  const double* pb = bias.data();
  double* po = out.data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t co = 0; co < C_out; ++co) {
      double* omap = po + (b * C_out + co) * H * W;
      for (std::size_t i = 0; i < H * W; ++i) omap[i] = pb[co];
      for (std::size_t ci = 0; ci < C_in; ++ci) {
        const double* xmap = px + (b * C_in + ci) * H * W;
        const double* wk = pw + ((co * C_in + ci) * k) * k;
        for (int kh = 0; kh < k; ++kh) {
          const int oh = kh - half;
          for (int kw = 0; kw < k; ++kw) {
            const int ow = kw - half;
            const double wv = wk[kh * k + kw];
            if (wv == 0.0) continue;
            const int hlo = oh < 0 ? -oh : 0;
            const int hhi = oh > 0 ? Hi - oh : Hi;
            const int wlo = ow < 0 ? -ow : 0;
            const int whi = ow > 0 ? Wi - ow : Wi;
            for (int h = hlo; h < hhi; ++h) {
              const double* xr = xmap + (h + oh) * Wi + ow;
              double* orr = omap + h * Wi;
              for (int w = wlo; w < whi; ++w) orr[w] += wv * xr[w];
            }
          }
        }
      }
    }
  }

  const bool want = Graph::current() != nullptr &&
                    (x.requires_grad() || weight.requires_grad() ||
                     bias.requires_grad());
  if (want) {
    out.set_requires_grad(true);
    auto xi = x.impl(), wi = weight.impl(), bi = bias.impl(), oi = out.impl();
    Graph::current()->record(oi, [xi, wi, bi, oi, B, C_in, C_out, H, W, k, half,
                                  Hi, Wi]() {
      const double* g = oi->grad.data();
      const double* px = xi->data.data();
      const double* pw = wi->data.data();
      if (bi->requires_grad) {
        bi->ensure_grad();
        double* gb = bi->grad.data();
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t co = 0; co < C_out; ++co) {
            const double* gmap = g + (b * C_out + co) * H * W;
            double acc = 0.0;
            for (std::size_t i = 0; i < H * W; ++i) acc += gmap[i];
            gb[co] += acc;
          }
        }
      }
      if (wi->requires_grad) wi->ensure_grad();
      if (xi->requires_grad) xi->ensure_grad();
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t co = 0; co < C_out; ++co) {
          const double* gmap = g + (b * C_out + co) * H * W;
          for (std::size_t ci = 0; ci < C_in; ++ci) {
            const double* xmap = px + (b * C_in + ci) * H * W;
            const double* wk = pw + ((co * C_in + ci) * k) * k;
            double* gwk = wi->requires_grad
                              ? wi->grad.data() + ((co * C_in + ci) * k) * k
                              : nullptr;
            double* gxmap = xi->requires_grad
                                ? xi->grad.data() + (b * C_in + ci) * H * W
                                : nullptr;
            for (int kh = 0; kh < k; ++kh) {
              const int oh = kh - half;
              for (int kw = 0; kw < k; ++kw) {
                const int ow = kw - half;
                const int hlo = oh < 0 ? -oh : 0;
                const int hhi = oh > 0 ? Hi - oh : Hi;
                const int wlo = ow < 0 ? -ow : 0;
                const int whi = ow > 0 ? Wi - ow : Wi;
                if (gwk != nullptr) {
                  double acc = 0.0;
                  for (int h = hlo; h < hhi; ++h) {
                    const double* xr = xmap + (h + oh) * Wi + ow;
                    const double* gr = gmap + h * Wi;
                    for (int w = wlo; w < whi; ++w) acc += gr[w] * xr[w];
                  }
                  gwk[kh * k + kw] += acc;
                }
                if (gxmap != nullptr) {
                  const double wv = wk[kh * k + kw];
                  if (wv != 0.0) {
                    for (int h = hlo; h < hhi; ++h) {
                      double* gxr = gxmap + (h + oh) * Wi + ow;
                      const double* gr = gmap + h * Wi;
                      for (int w = wlo; w < whi; ++w) gxr[w] += wv * gr[w];
                    }
                  }
                }
              }
            }
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Deconv2d

Deconv2d::Deconv2d(ParamStore& params, const std::string& name,
                   std::size_t c_in, std::size_t c_out) {
  weight = params.create(name + ".weight",
                         {c_in, c_out, static_cast<std::size_t>(kKernel),
                          static_cast<std::size_t>(kKernel)},
                         "deconv2d", c_in * kKernel * kKernel);
  bias = params.create_const(name + ".bias", {c_out}, "deconv2d", 0.0);
}

Tensor Deconv2d::forward(const Tensor& x) const {
  if (x.rank() != 4) {
    throw ShapeError("deconv2d: expected [B, C, H, W], got " +
                     shape_str(x.shape()));
  }
  const std::size_t B = x.shape()[0], C_in = x.shape()[1], H = x.shape()[2],
                    W = x.shape()[3];
  if (weight.shape()[0] != C_in) {
    throw ShapeError("deconv2d: channel mismatch");
  }
  const std::size_t C_out = weight.shape()[1];
  const std::size_t OH = 2 * H, OW = 2 * W;
  const int k = kKernel;

  Tensor out(Shape{B, C_out, OH, OW});
  const double* px = x.data();
  const double* pw = weight.data();
  const double* pb = bias.data();
  double* po = out.data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t co = 0; co < C_out; ++co) {
      double* omap = po + (b * C_out + co) * OH * OW;
      for (std::size_t i = 0; i < OH * OW; ++i) omap[i] = pb[co];
    }
  }
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t ci = 0; ci < C_in; ++ci) {
      const double* xmap = px + (b * C_in + ci) * H * W;
      for (std::size_t co = 0; co < C_out; ++co) {
        const double* wk = pw + ((ci * C_out + co) * k) * k;
        double* omap = po + (b * C_out + co) * OH * OW;
        for (std::size_t ih = 0; ih < H; ++ih) {
          for (std::size_t iw = 0; iw < W; ++iw) {
            const double xv = xmap[ih * W + iw];
            if (xv == 0.0) continue;
            for (int kh = 0; kh < k; ++kh) {
              const int oh = static_cast<int>(ih) * kStride - kPad + kh;
              if (oh < 0 || oh >= static_cast<int>(OH)) continue;
              for (int kw = 0; kw < k; ++kw) {
                const int ow = static_cast<int>(iw) * kStride - kPad + kw;
                if (ow < 0 || ow >= static_cast<int>(OW)) continue;
                omap[oh * OW + ow] += xv * wk[kh * k + kw];
              }
            }
          }
        }
      }
    }
  }

  const bool want = Graph::current() != nullptr &&
                    (x.requires_grad() || weight.requires_grad() ||
                     bias.requires_grad());
  if (want) {
    out.set_requires_grad(true);
    auto xi = x.impl(), wi = weight.impl(), bi = bias.impl(), oi = out.impl();
    Graph::current()->record(oi, [xi, wi, bi, oi, B, C_in, C_out, H, W, OH, OW,
                                  k]() {
      const double* g = oi->grad.data();
      const double* px = xi->data.data();
      const double* pw = wi->data.data();
      if (bi->requires_grad) {
        bi->ensure_grad();
        double* gb = bi->grad.data();
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t co = 0; co < C_out; ++co) {
            const double* gmap = g + (b * C_out + co) * OH * OW;
            double acc = 0.0;
            for (std::size_t i = 0; i < OH * OW; ++i) acc += gmap[i];
            gb[co] += acc;
          }
        }
      }
      if (wi->requires_grad) wi->ensure_grad();
      if (xi->requires_grad) xi->ensure_grad();
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t ci = 0; ci < C_in; ++ci) {
          const double* xmap = px + (b * C_in + ci) * H * W;
          double* gxmap =
              xi->requires_grad ? xi->grad.data() + (b * C_in + ci) * H * W
                                : nullptr;
          for (std::size_t co = 0; co < C_out; ++co) {
            const double* wk = pw + ((ci * C_out + co) * k) * k;
            double* gwk = wi->requires_grad
                              ? wi->grad.data() + ((ci * C_out + co) * k) * k
                              : nullptr;
            const double* gmap = g + (b * C_out + co) * OH * OW;
            for (std::size_t ih = 0; ih < H; ++ih) {
              for (std::size_t iw = 0; iw < W; ++iw) {
                const double xv = xmap[ih * W + iw];
                double gx_acc = 0.0;
                for (int kh = 0; kh < k; ++kh) {
                  const int oh = static_cast<int>(ih) * kStride - kPad + kh;
                  if (oh < 0 || oh >= static_cast<int>(OH)) continue;
                  for (int kw = 0; kw < k; ++kw) {
                    const int ow = static_cast<int>(iw) * kStride - kPad + kw;
                    if (ow < 0 || ow >= static_cast<int>(OW)) continue;
                    const double gv = gmap[oh * OW + ow];
                    if (gwk != nullptr) gwk[kh * k + kw] += gv * xv;
                    gx_acc += gv * wk[kh * k + kw];
                  }
                }
                if (gxmap != nullptr) gxmap[ih * W + iw] += gx_acc;
              }
            }
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(ParamStore& params, const std::string& name, std::size_t in,
               std::size_t out) {
  weight = params.create(name + ".weight", {in, out}, "linear", in);
  bias = params.create_const(name + ".bias", {out}, "linear", 0.0);
}

Tensor Linear::forward(const Tensor& x) const {
  if (x.rank() != 2) {
    throw ShapeError("linear: expected [N, in], got " + shape_str(x.shape()));
  }
  const std::size_t N = x.shape()[0], In = x.shape()[1];
  if (In != weight.shape()[0]) {
    throw ShapeError("linear: input width " + std::to_string(In) +
                     " != weight rows " + std::to_string(weight.shape()[0]));
  }
  const std::size_t Out = weight.shape()[1];
  Tensor out(Shape{N, Out});
  const double* px = x.data();
  const double* pw = weight.data();
  const double* pb = bias.data();
  double* po = out.data();
  for (std::size_t n = 0; n < N; ++n) {
    double* orow = po + n * Out;
    for (std::size_t o = 0; o < Out; ++o) orow[o] = pb[o];
    const double* xrow = px + n * In;
    for (std::size_t i = 0; i < In; ++i) {
      const double xv = xrow[i];
      if (xv == 0.0) continue;
      const double* wrow = pw + i * Out;
      for (std::size_t o = 0; o < Out; ++o) orow[o] += xv * wrow[o];
    }
  }

  const bool want = Graph::current() != nullptr &&
                    (x.requires_grad() || weight.requires_grad() ||
                     bias.requires_grad());
  if (want) {
    out.set_requires_grad(true);
    auto xi = x.impl(), wi = weight.impl(), bi = bias.impl(), oi = out.impl();
    Graph::current()->record(oi, [xi, wi, bi, oi, N, In, Out]() {
      const double* g = oi->grad.data();
      const double* px = xi->data.data();
      const double* pw = wi->data.data();
      if (bi->requires_grad) {
        bi->ensure_grad();
        double* gb = bi->grad.data();
        for (std::size_t n = 0; n < N; ++n) {
          const double* grow = g + n * Out;
          for (std::size_t o = 0; o < Out; ++o) gb[o] += grow[o];
        }
      }
      if (wi->requires_grad) {
        wi->ensure_grad();
        double* gw = wi->grad.data();
        for (std::size_t n = 0; n < N; ++n) {
          const double* xrow = px + n * In;
          const double* grow = g + n * Out;
          for (std::size_t i = 0; i < In; ++i) {
            const double xv = xrow[i];
            if (xv == 0.0) continue;
            double* gwrow = gw + i * Out;
            for (std::size_t o = 0; o < Out; ++o) gwrow[o] += xv * grow[o];
          }
        }
      }
      if (xi->requires_grad) {
        xi->ensure_grad();
        double* gx = xi->grad.data();
        for (std::size_t n = 0; n < N; ++n) {
          const double* grow = g + n * Out;
          double* gxrow = gx + n * In;
          for (std::size_t i = 0; i < In; ++i) {
            const double* wrow = pw + i * Out;
            double acc = 0.0;
            for (std::size_t o = 0; o < Out; ++o) acc += wrow[o] * grow[o];
            gxrow[i] += acc;
          }
        }
      }
    });
  }
  return out;
}

}  // namespace dcan::nn
