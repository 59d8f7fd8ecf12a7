#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dcan/rng.hpp"
#include "dcan/tensor.hpp"

namespace dcan::nn {

// Ordered registry of named learnable tensors. A fresh store initializes
// weights He-uniform from its seed; a store loaded from a checkpoint hands
// back the saved tensors instead (shape-checked against the requester).
class ParamStore {
 public:
  struct Entry {
    std::string name;
    std::string layer_type;
    Tensor tensor;
  };

  explicit ParamStore(std::uint64_t seed);

  // He-style uniform init over [-sqrt(6/fan_in), sqrt(6/fan_in)].
  Tensor create(const std::string& name, Shape shape,
                const std::string& layer_type, std::size_t fan_in);
  Tensor create_const(const std::string& name, Shape shape,
                      const std::string& layer_type, double value);

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Tensor> tensors() const;
  void zero_grads();
  std::size_t total_size() const;

  // Checkpoint: params.bin holds the tensors back to back in the tensor
  // binary format, manifest.json records name/layer_type/shape in order.
  void save(const std::filesystem::path& dir) const;
  static ParamStore load(const std::filesystem::path& dir);

 private:
  ParamStore() = default;
  Tensor take_loaded(const std::string& name, const Shape& shape,
                     const std::string& layer_type);

  Rng rng_{0};
  bool loaded_ = false;
  std::vector<Entry> entries_;
  std::size_t next_loaded_ = 0;
};

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// Length-preserving dilated 1-D convolution, stride 1, zero padding
// dilation*(kernel-1)/2 on each side. Input [B, C_in, T].
struct Conv1d {
  Tensor weight;  // [C_out, C_in, k]
  Tensor bias;    // [C_out]
  int kernel = 3;
  int dilation = 1;

  Conv1d() = default;
  Conv1d(ParamStore& params, const std::string& name, std::size_t c_in,
         std::size_t c_out, int kernel = 3, int dilation = 1);
  Tensor forward(const Tensor& x) const;
};

// Per-(sample, channel) standardization over the temporal axis followed by
// a learned per-channel affine. Input [B, C, T], T >= 2.
struct Norm {
  Tensor scale;  // [C]
  Tensor shift;  // [C]
  double epsilon = 1e-5;

  Norm() = default;
  Norm(ParamStore& params, const std::string& name, std::size_t channels);
  Tensor forward(const Tensor& x) const;
};

// Length-preserving 2-D convolution, stride 1, zero padding (k-1)/2.
// Input [B, C_in, H, W].
struct Conv2d {
  Tensor weight;  // [C_out, C_in, k, k]
  Tensor bias;    // [C_out]
  int kernel = 3;

  Conv2d() = default;
  Conv2d(ParamStore& params, const std::string& name, std::size_t c_in,
         std::size_t c_out, int kernel = 3);
  Tensor forward(const Tensor& x) const;
};

// Transposed 2-D convolution with kernel 4, stride 2, padding 1: output
// spatial dims are exactly 2x the input dims.
struct Deconv2d {
  static constexpr int kKernel = 4;
  static constexpr int kStride = 2;
  static constexpr int kPad = 1;

  Tensor weight;  // [C_in, C_out, 4, 4]
  Tensor bias;    // [C_out]

  Deconv2d() = default;
  Deconv2d(ParamStore& params, const std::string& name, std::size_t c_in,
           std::size_t c_out);
  Tensor forward(const Tensor& x) const;
};

// Fully connected y = x W + b over rows. Input [N, in].
struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  Linear() = default;
  Linear(ParamStore& params, const std::string& name, std::size_t in,
         std::size_t out);
  Tensor forward(const Tensor& x) const;
};

}  // namespace dcan::nn
