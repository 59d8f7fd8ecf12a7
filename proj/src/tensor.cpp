#include "dcan/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dcan/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "tensor binary format assumes a little-endian host");

namespace dcan {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape shape, double fill, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  impl_->shape = std::move(shape);
  impl_->data.assign(shape_numel(impl_->shape), fill);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " does not match " +
                     std::to_string(data.size()) + " elements");
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<double>{v}, requires_grad);
}

double Tensor::value() const {
  if (size() != 1) {
    throw ShapeError("value(): tensor has " + std::to_string(size()) +
                     " elements, expected scalar");
  }
  return impl_->data[0];
}

bool Tensor::all_finite() const {
  for (double v : impl_->data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Graph

namespace {
thread_local Graph* tl_current_graph = nullptr;
}

Graph::Graph() {
  prev_ = tl_current_graph;
  tl_current_graph = this;
}

Graph::~Graph() { tl_current_graph = prev_; }

Graph* Graph::current() { return tl_current_graph; }

void Graph::record(std::shared_ptr<detail::TensorImpl> output,
                   std::function<void()> backward_fn) {
  entries_.push_back(Entry{std::move(output), std::move(backward_fn)});
}

void Graph::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ShapeError("backward: loss must be a scalar tensor");
  }
  if (!loss.requires_grad()) {
    throw ShapeError("backward: loss does not require grad (no recorded ops)");
  }
  // Op outputs get fresh gradients each pass; leaves keep accumulating.
  for (Entry& e : entries_) {
    e.output->grad.assign(e.output->data.size(), 0.0);
  }
  loss.impl()->ensure_grad();
  loss.impl()->grad[0] = 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    it->fn();
  }
}

// ---------------------------------------------------------------------------
// Op helpers

namespace {

bool grad_wanted(std::initializer_list<const Tensor*> inputs) {
  if (Graph::current() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

const char* ew_name(EwKind k) {
  switch (k) {
    case EwKind::Add: return "add";
    case EwKind::Sub: return "sub";
    case EwKind::Mul: return "mul";
    case EwKind::Div: return "div";
    case EwKind::Pow: return "pow";
  }
  return "?";
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

Tensor elementwise(EwKind kind, const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, ew_name(kind));
  const std::size_t n = a.size();
  Tensor out(a.shape());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  switch (kind) {
    case EwKind::Add:
      for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
      break;
    case EwKind::Sub:
      for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
      break;
    case EwKind::Mul:
      for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
      break;
    case EwKind::Div:
      for (std::size_t i = 0; i < n; ++i) {
        if (pb[i] == 0.0) throw NumericError("div: division by zero");
        po[i] = pa[i] / pb[i];
      }
      break;
    case EwKind::Pow:
      for (std::size_t i = 0; i < n; ++i) {
        po[i] = std::pow(pa[i], pb[i]);
        if (!std::isfinite(po[i])) {
          throw NumericError("pow: non-finite result at element " +
                             std::to_string(i));
        }
      }
      break;
  }
  if (grad_wanted({&a, &b})) {
    out.set_requires_grad(true);
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    Graph::current()->record(oi, [kind, ai, bi, oi, n]() {
      const double* g = oi->grad.data();
      const double* da = ai->data.data();
      const double* db = bi->data.data();
      const double* dout = oi->data.data();
      if (ai->requires_grad) {
        ai->ensure_grad();
        double* ga = ai->grad.data();
        switch (kind) {
          case EwKind::Add:
            for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
            break;
          case EwKind::Sub:
            for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
            break;
          case EwKind::Mul:
            for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * db[i];
            break;
          case EwKind::Div:
            for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] / db[i];
            break;
          case EwKind::Pow:
            for (std::size_t i = 0; i < n; ++i) {
              ga[i] += g[i] * db[i] * std::pow(da[i], db[i] - 1.0);
            }
            break;
        }
      }
      if (bi->requires_grad) {
        bi->ensure_grad();
        double* gb = bi->grad.data();
        switch (kind) {
          case EwKind::Add:
            for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
            break;
          case EwKind::Sub:
            for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
            break;
          case EwKind::Mul:
            for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * da[i];
            break;
          case EwKind::Div:
            for (std::size_t i = 0; i < n; ++i) {
              gb[i] -= g[i] * da[i] / (db[i] * db[i]);
            }
            break;
          case EwKind::Pow:
            for (std::size_t i = 0; i < n; ++i) {
              if (da[i] <= 0.0) {
                throw NumericError("pow backward: d/db needs base > 0");
              }
              gb[i] += g[i] * dout[i] * std::log(da[i]);
            }
            break;
        }
      }
    });
  }
  return out;
}

Tensor elementwise(EwKind kind, const Tensor& a, double b) {
  const std::size_t n = a.size();
  Tensor out(a.shape());
  const double* pa = a.data();
  double* po = out.data();
  switch (kind) {
    case EwKind::Add:
      for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] + b;
      break;
    case EwKind::Sub:
      for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] - b;
      break;
    case EwKind::Mul:
      for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * b;
      break;
    case EwKind::Div:
      if (b == 0.0) throw NumericError("div: division by zero");
      for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] / b;
      break;
    case EwKind::Pow:
      for (std::size_t i = 0; i < n; ++i) {
        po[i] = std::pow(pa[i], b);
        if (!std::isfinite(po[i])) {
          throw NumericError("pow: non-finite result at element " +
                             std::to_string(i));
        }
      }
      break;
  }
  if (grad_wanted({&a})) {
    out.set_requires_grad(true);
    auto ai = a.impl(), oi = out.impl();
    Graph::current()->record(oi, [kind, ai, oi, b, n]() {
      if (!ai->requires_grad) return;
      ai->ensure_grad();
      const double* g = oi->grad.data();
      const double* da = ai->data.data();
      double* ga = ai->grad.data();
      switch (kind) {
        case EwKind::Add:
        case EwKind::Sub:
          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
          break;
        case EwKind::Mul:
          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * b;
          break;
        case EwKind::Div:
          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] / b;
          break;
        case EwKind::Pow:
          for (std::size_t i = 0; i < n; ++i) {
            ga[i] += g[i] * b * std::pow(da[i], b - 1.0);
          }
          break;
      }
    });
  }
  return out;
}

Tensor elementwise(EwKind kind, double a, const Tensor& b) {
  switch (kind) {
    case EwKind::Add:
      return elementwise(EwKind::Add, b, a);
    case EwKind::Mul:
      return elementwise(EwKind::Mul, b, a);
    case EwKind::Sub:
      // a - b = (-1) * b + a
      return elementwise(EwKind::Add, elementwise(EwKind::Mul, b, -1.0), a);
    case EwKind::Div: {
      // a / b, elementwise reciprocal scaled by a.
      Tensor num(b.shape(), a);
      return elementwise(EwKind::Div, num, b);
    }
    case EwKind::Pow: {
      Tensor base(b.shape(), a);
      return elementwise(EwKind::Pow, base, b);
    }
  }
  throw ShapeError("elementwise: bad op kind");
}

Tensor pow(const Tensor& a, double b) { return elementwise(EwKind::Pow, a, b); }

// ---------------------------------------------------------------------------
// Matmul

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul: expects rank-2 tensors, got " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  const std::size_t k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
  Tensor out(Shape{m, n});
  {
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double aik = pa[i * k + kk];
        if (aik == 0.0) continue;
        const double* brow = pb + kk * n;
        double* orow = po + i * n;
        for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
      }
    }
  }
  if (grad_wanted({&a, &b})) {
    out.set_requires_grad(true);
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    Graph::current()->record(oi, [ai, bi, oi, m, k, n]() {
      const double* g = oi->grad.data();
      if (ai->requires_grad) {
        ai->ensure_grad();
        double* ga = ai->grad.data();
        const double* pb = bi->data.data();
        // dA = G * B^T
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t kk = 0; kk < k; ++kk) {
            double acc = 0.0;
            const double* grow = g + i * n;
            const double* brow = pb + kk * n;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            ga[i * k + kk] += acc;
          }
        }
      }
      if (bi->requires_grad) {
        bi->ensure_grad();
        double* gb = bi->grad.data();
        const double* pa = ai->data.data();
        // dB = A^T * G
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = g + i * n;
          for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = pa[i * k + kk];
            if (aik == 0.0) continue;
            double* brow = gb + kk * n;
            for (std::size_t j = 0; j < n; ++j) brow[j] += aik * grow[j];
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions and pointwise functions

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  const double* px = x.data();
  for (std::size_t i = 0; i < x.size(); ++i) acc += px[i];
  Tensor out = Tensor::scalar(acc);
  if (grad_wanted({&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl(), oi = out.impl();
    Graph::current()->record(oi, [xi, oi]() {
      if (!xi->requires_grad) return;
      xi->ensure_grad();
      const double g = oi->grad[0];
      for (double& v : xi->grad) v += g;
    });
  }
  return out;
}

Tensor log(const Tensor& x) {
  Tensor out(x.shape());
  const double* px = x.data();
  double* po = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (px[i] <= 0.0) throw NumericError("log: non-positive input");
    po[i] = std::log(px[i]);
  }
  if (grad_wanted({&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl(), oi = out.impl();
    Graph::current()->record(oi, [xi, oi]() {
      if (!xi->requires_grad) return;
      xi->ensure_grad();
      const double* g = oi->grad.data();
      const double* dx = xi->data.data();
      double* gx = xi->grad.data();
      for (std::size_t i = 0; i < xi->data.size(); ++i) gx[i] += g[i] / dx[i];
    });
  }
  return out;
}

Tensor exp(const Tensor& x) {
  Tensor out(x.shape());
  const double* px = x.data();
  double* po = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) po[i] = std::exp(px[i]);
  if (grad_wanted({&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl(), oi = out.impl();
    Graph::current()->record(oi, [xi, oi]() {
      if (!xi->requires_grad) return;
      xi->ensure_grad();
      const double* g = oi->grad.data();
      const double* dout = oi->data.data();
      double* gx = xi->grad.data();
      for (std::size_t i = 0; i < xi->data.size(); ++i) gx[i] += g[i] * dout[i];
    });
  }
  return out;
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  if (lo > hi) throw ShapeError("clamp: lo > hi");
  Tensor out(x.shape());
  const double* px = x.data();
  double* po = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    po[i] = px[i] < lo ? lo : (px[i] > hi ? hi : px[i]);
  }
  if (grad_wanted({&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl(), oi = out.impl();
    Graph::current()->record(oi, [xi, oi, lo, hi]() {
      if (!xi->requires_grad) return;
      xi->ensure_grad();
      const double* g = oi->grad.data();
      const double* dx = xi->data.data();
      double* gx = xi->grad.data();
      for (std::size_t i = 0; i < xi->data.size(); ++i) {
        if (dx[i] >= lo && dx[i] <= hi) gx[i] += g[i];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape ops

Tensor reshape(const Tensor& x, Shape new_shape) {
  if (shape_numel(new_shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                     shape_str(new_shape));
  }
  Tensor out(std::move(new_shape), x.vec());
  if (grad_wanted({&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl(), oi = out.impl();
    Graph::current()->record(oi, [xi, oi]() {
      if (!xi->requires_grad) return;
      xi->ensure_grad();
      const double* g = oi->grad.data();
      double* gx = xi->grad.data();
      for (std::size_t i = 0; i < xi->data.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

namespace {

std::vector<std::size_t> row_major_strides(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) {
    strides[i - 1] = strides[i] * shape[i];
  }
  return strides;
}

// Maps flat output index -> flat input index for a permutation of axes.
std::vector<std::size_t> permute_index_map(const Shape& in_shape,
                                           const std::vector<std::size_t>& axes) {
  const std::size_t r = in_shape.size();
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = in_shape[axes[i]];
  const auto in_strides = row_major_strides(in_shape);
  const auto out_strides = row_major_strides(out_shape);
  const std::size_t n = shape_numel(in_shape);
  std::vector<std::size_t> map(n);
  for (std::size_t o = 0; o < n; ++o) {
    std::size_t rem = o;
    std::size_t src = 0;
    for (std::size_t i = 0; i < r; ++i) {
      const std::size_t coord = rem / out_strides[i];
      rem %= out_strides[i];
      src += coord * in_strides[axes[i]];
    }
    map[o] = src;
  }
  return map;
}

}  // namespace

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const std::size_t r = x.rank();
  if (axes.size() != r) {
    throw ShapeError("permute: axes count " + std::to_string(axes.size()) +
                     " != rank " + std::to_string(r));
  }
  std::vector<bool> seen(r, false);
  for (std::size_t a : axes) {
    if (a >= r || seen[a]) throw ShapeError("permute: invalid axes");
    seen[a] = true;
  }
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = x.shape()[axes[i]];
  auto map = permute_index_map(x.shape(), axes);
  Tensor out(out_shape);
  const double* px = x.data();
  double* po = out.data();
  for (std::size_t o = 0; o < map.size(); ++o) po[o] = px[map[o]];
  if (grad_wanted({&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl(), oi = out.impl();
    Graph::current()->record(oi, [xi, oi, map = std::move(map)]() {
      if (!xi->requires_grad) return;
      xi->ensure_grad();
      const double* g = oi->grad.data();
      double* gx = xi->grad.data();
      for (std::size_t o = 0; o < map.size(); ++o) gx[map[o]] += g[o];
    });
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& xs, std::size_t axis) {
  if (xs.empty()) throw ShapeError("concat: no inputs");
  const std::size_t r = xs[0].rank();
  if (axis >= r) throw ShapeError("concat: axis out of range");
  Shape out_shape = xs[0].shape();
  std::size_t axis_total = 0;
  for (const Tensor& t : xs) {
    if (t.rank() != r) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < r; ++i) {
      if (i != axis && t.shape()[i] != out_shape[i]) {
        throw ShapeError("concat: shape mismatch " + shape_str(t.shape()) +
                         " vs " + shape_str(out_shape));
      }
    }
    axis_total += t.shape()[axis];
  }
  out_shape[axis] = axis_total;
  Tensor out(out_shape);

  // outer = product of dims before axis; inner = product after.
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= out_shape[i];
  for (std::size_t i = axis + 1; i < r; ++i) inner *= out_shape[i];

  double* po = out.data();
  std::size_t axis_off = 0;
  for (const Tensor& t : xs) {
    const std::size_t a = t.shape()[axis];
    const double* pt = t.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::memcpy(po + (o * axis_total + axis_off) * inner,
                  pt + o * a * inner, a * inner * sizeof(double));
    }
    axis_off += a;
  }

  bool want = false;
  for (const Tensor& t : xs) want = want || t.requires_grad();
  if (Graph::current() != nullptr && want) {
    out.set_requires_grad(true);
    std::vector<std::shared_ptr<detail::TensorImpl>> impls;
    impls.reserve(xs.size());
    for (const Tensor& t : xs) impls.push_back(t.impl());
    auto oi = out.impl();
    Graph::current()->record(
        oi, [impls = std::move(impls), oi, outer, inner, axis_total, axis]() {
          const double* g = oi->grad.data();
          std::size_t axis_off = 0;
          for (auto& xi : impls) {
            const std::size_t a = xi->shape[axis];
            if (xi->requires_grad) {
              xi->ensure_grad();
              double* gx = xi->grad.data();
              for (std::size_t o = 0; o < outer; ++o) {
                const double* gsrc = g + (o * axis_total + axis_off) * inner;
                double* gdst = gx + o * a * inner;
                for (std::size_t i = 0; i < a * inner; ++i) gdst[i] += gsrc[i];
              }
            }
            axis_off += a;
          }
        });
  }
  return out;
}

Tensor select(const Tensor& x, std::size_t axis, std::size_t index) {
  const std::size_t r = x.rank();
  if (axis >= r) throw ShapeError("select: axis out of range");
  if (index >= x.shape()[axis]) throw ShapeError("select: index out of range");
  Shape out_shape;
  for (std::size_t i = 0; i < r; ++i) {
    if (i != axis) out_shape.push_back(x.shape()[i]);
  }
  if (out_shape.empty()) out_shape.push_back(1);

  std::size_t outer = 1, inner = 1;
  const std::size_t a = x.shape()[axis];
  for (std::size_t i = 0; i < axis; ++i) outer *= x.shape()[i];
  for (std::size_t i = axis + 1; i < r; ++i) inner *= x.shape()[i];

  Tensor out(out_shape);
  const double* px = x.data();
  double* po = out.data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::memcpy(po + o * inner, px + (o * a + index) * inner,
                inner * sizeof(double));
  }
  if (grad_wanted({&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl(), oi = out.impl();
    Graph::current()->record(oi, [xi, oi, outer, inner, a, index]() {
      if (!xi->requires_grad) return;
      xi->ensure_grad();
      const double* g = oi->grad.data();
      double* gx = xi->grad.data();
      for (std::size_t o = 0; o < outer; ++o) {
        double* gdst = gx + (o * a + index) * inner;
        const double* gsrc = g + o * inner;
        for (std::size_t i = 0; i < inner; ++i) gdst[i] += gsrc[i];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Binary IO

namespace {
constexpr char kMagic[4] = {'D', 'C', 'T', 'N'};
}

void Tensor::save(std::ostream& os) const {
  os.write(kMagic, 4);
  const std::uint32_t rank32 = static_cast<std::uint32_t>(rank());
  os.write(reinterpret_cast<const char*>(&rank32), sizeof(rank32));
  for (std::size_t d : shape()) {
    const std::uint64_t d64 = d;
    os.write(reinterpret_cast<const char*>(&d64), sizeof(d64));
  }
  os.write(reinterpret_cast<const char*>(data()), size() * sizeof(double));
  if (!os) throw ConfigError("tensor save: stream write failed");
}

void Tensor::save_file(const std::filesystem::path& p) const {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw ConfigError("tensor save: cannot open " + p.string());
  save(os);
}

Tensor Tensor::load(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw ConfigError("tensor load: bad magic");
  }
  std::uint32_t rank32 = 0;
  is.read(reinterpret_cast<char*>(&rank32), sizeof(rank32));
  Shape shape(rank32);
  for (std::uint32_t i = 0; i < rank32; ++i) {
    std::uint64_t d = 0;
    is.read(reinterpret_cast<char*>(&d), sizeof(d));
    shape[i] = static_cast<std::size_t>(d);
  }
  std::vector<double> data(shape_numel(shape));
  is.read(reinterpret_cast<char*>(data.data()), data.size() * sizeof(double));
  if (!is) throw ConfigError("tensor load: truncated stream");
  return Tensor(std::move(shape), std::move(data));
}

Tensor Tensor::load_file(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw ConfigError("tensor load: cannot open " + p.string());
  return load(is);
}

}  // namespace dcan
