#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "drsl/rng.hpp"
#include "drsl/tensor.hpp"

namespace drsl::nn {

/// One named, trainable array with its accumulated gradient.
struct Param {
  std::string name;
  std::vector<int> shape;
  AlignedVector value;
  AlignedVector grad;

  [[nodiscard]] std::size_t numel() const { return value.size(); }
};

/// Flat registry of parameters in registration order. Names are unique and
/// the order is stable, which is what the checkpoint format relies on.
class ParamStore {
 public:
  std::size_t add(const std::string& name, std::vector<int> shape);

  Param& operator[](std::size_t i) { return params_[i]; }
  const Param& operator[](std::size_t i) const { return params_[i]; }
  Param& at(const std::string& name);
  [[nodiscard]] const Param& at(const std::string& name) const;
  [[nodiscard]] bool contains(const std::string& name) const { return index_.count(name) != 0; }

  [[nodiscard]] std::size_t size() const { return params_.size(); }
  [[nodiscard]] std::size_t total_numel() const;
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  [[nodiscard]] auto begin() const { return params_.begin(); }
  [[nodiscard]] auto end() const { return params_.end(); }

  void zero_grad();
  [[nodiscard]] bool all_finite() const;

 private:
  std::vector<Param> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct ConvSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int dilation = 1;
  int padding = 1;
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// What a conv needs from its forward pass to run backward.
struct ConvCache {
  RowMatrix columns;  // (in*k*k) x (out_h*out_w)
  int in_height = 0;
  int in_width = 0;
};

/// 2-D convolution with stride, dilation and zero padding (im2col + GEMM).
/// Weight layout: out x in x k x k; bias: out.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamStore& store, const std::string& name, const ConvSpec& spec);

  [[nodiscard]] Tensor forward(const ParamStore& store, const Tensor& x, ConvCache* cache) const;
  /// Accumulates weight/bias gradients into `store`; returns dL/dx.
  Tensor backward(ParamStore& store, const ConvCache& cache, const Tensor& dy,
                  bool need_input_grad = true) const;

  [[nodiscard]] int out_size(int in) const {
    return (in + 2 * spec_.padding - spec_.dilation * (spec_.kernel - 1) - 1) / spec_.stride + 1;
  }
  [[nodiscard]] const ConvSpec& spec() const { return spec_; }
  [[nodiscard]] std::size_t weight_index() const { return weight_; }
  [[nodiscard]] std::size_t bias_index() const { return bias_; }

  /// He-normal weights, zero bias.
  void init(ParamStore& store, Rng& rng) const;

 private:
  ConvSpec spec_;
  std::size_t weight_ = 0;
  std::size_t bias_ = 0;
};

Tensor relu(const Tensor& x);
/// dL/dx given the ReLU output y (mask y > 0).
Tensor relu_backward(const Tensor& y, const Tensor& dy);

/// Bilinear resize with half-pixel centers (align_corners = false),
/// borders clamped. Downscaling by 2 averages 2x2 blocks.
Tensor resize_bilinear(const Tensor& x, int out_h, int out_w);
Tensor resize_bilinear_backward(const Tensor& dy, int in_h, int in_w);

/// Per-pixel softmax over channels, max-subtracted.
Tensor softmax_channels(const Tensor& logits);

}  // namespace drsl::nn
