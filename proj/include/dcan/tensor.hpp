#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace dcan {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;  // row-major
  std::vector<double> grad;  // empty until first touched; same length as data
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

// Dense f64 tensor. Value-semantics handle over shared storage: copies
// alias the same buffer, which is what the tape's backward closures rely on.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t size() const { return impl_->data.size(); }

  double* data() { return impl_->data.data(); }
  const double* data() const { return impl_->data.data(); }
  std::vector<double>& vec() { return impl_->data; }
  const std::vector<double>& vec() const { return impl_->data; }
  double operator[](std::size_t i) const { return impl_->data[i]; }
  double& operator[](std::size_t i) { return impl_->data[i]; }

  // Scalar convenience; requires size() == 1.
  double value() const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool v) {
    impl_->requires_grad = v;
    return *this;
  }

  bool has_grad() const { return !impl_->grad.empty(); }
  double* grad() { return impl_->grad.data(); }
  const double* grad() const { return impl_->grad.data(); }
  std::vector<double>& grad_vec() { return impl_->grad; }
  const std::vector<double>& grad_vec() const { return impl_->grad; }
  void ensure_grad() { impl_->ensure_grad(); }
  void zero_grad() { impl_->grad.assign(impl_->data.size(), 0.0); }

  bool all_finite() const;

  std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }

  // Binary little-endian format: "DCTN", u32 rank, u64 dims..., f64 payload.
  void save(std::ostream& os) const;
  void save_file(const std::filesystem::path& p) const;
  static Tensor load(std::istream& is);
  static Tensor load_file(const std::filesystem::path& p);

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

// Dynamic tape. Constructing a Graph makes it the active tape for the
// current thread; differentiable ops record their backward closures on the
// active tape in execution order and backward() replays them in reverse.
// A Graph and the tensors it references are confined to one thread.
class Graph {
 public:
  Graph();
  ~Graph();
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  static Graph* current();

  void record(std::shared_ptr<detail::TensorImpl> output,
              std::function<void()> backward_fn);

  // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse. Gradients of
  // op outputs are reset per call; leaf gradients accumulate across calls.
  void backward(const Tensor& loss);

  std::size_t num_ops() const { return entries_.size(); }

 private:
  struct Entry {
    std::shared_ptr<detail::TensorImpl> output;
    std::function<void()> fn;
  };
  std::vector<Entry> entries_;
  Graph* prev_ = nullptr;
};

enum class EwKind { Add, Sub, Mul, Div, Pow };

Tensor elementwise(EwKind kind, const Tensor& a, const Tensor& b);
Tensor elementwise(EwKind kind, const Tensor& a, double b);
Tensor elementwise(EwKind kind, double a, const Tensor& b);

// Standard 2-D matrix product [m x k] * [k x n] -> [m x n].
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor sum(const Tensor& x);
Tensor log(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor clamp(const Tensor& x, double lo, double hi);

Tensor reshape(const Tensor& x, Shape new_shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);
Tensor concat(const std::vector<Tensor>& xs, std::size_t axis);
// Picks index along axis and drops that axis.
Tensor select(const Tensor& x, std::size_t axis, std::size_t index);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return elementwise(EwKind::Add, a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return elementwise(EwKind::Sub, a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return elementwise(EwKind::Mul, a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return elementwise(EwKind::Div, a, b); }
inline Tensor operator+(const Tensor& a, double b) { return elementwise(EwKind::Add, a, b); }
inline Tensor operator-(const Tensor& a, double b) { return elementwise(EwKind::Sub, a, b); }
inline Tensor operator*(const Tensor& a, double b) { return elementwise(EwKind::Mul, a, b); }
inline Tensor operator/(const Tensor& a, double b) { return elementwise(EwKind::Div, a, b); }
inline Tensor operator+(double a, const Tensor& b) { return elementwise(EwKind::Add, a, b); }
inline Tensor operator-(double a, const Tensor& b) { return elementwise(EwKind::Sub, a, b); }
inline Tensor operator*(double a, const Tensor& b) { return elementwise(EwKind::Mul, a, b); }
inline Tensor operator/(double a, const Tensor& b) { return elementwise(EwKind::Div, a, b); }
Tensor pow(const Tensor& a, double b);

}  // namespace dcan
