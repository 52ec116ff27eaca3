#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "drsl/common.hpp"

namespace drsl {

/// Buffers viewed through Eigen maps. A fixed base alignment keeps the
/// vectorized reduction order, and hence every result bit, independent of
/// where the allocator happened to place the data.
using AlignedVector = std::vector<double, Eigen::aligned_allocator<double>>;

/// Dense channel-major (C x H x W) tensor of doubles, one image at a time.
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  AlignedVector data;

  Tensor() = default;
  Tensor(int c, int h, int w, double fill = 0.0)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  [[nodiscard]] std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
  [[nodiscard]] std::size_t size() const { return data.size(); }
  [[nodiscard]] bool empty() const { return data.empty(); }

  double& operator()(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  double operator()(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  std::span<double> plane(int c) { return {data.data() + c * plane_size(), plane_size()}; }
  [[nodiscard]] std::span<const double> plane(int c) const {
    return {data.data() + c * plane_size(), plane_size()};
  }

  [[nodiscard]] bool same_shape(const Tensor& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }

  Tensor& operator+=(const Tensor& o);
  [[nodiscard]] bool all_finite() const;
};

/// H x W x 3 image with values in [0,1], stored channel-major.
using ImageTensor = Tensor;
/// Encoder output at stride 4.
using BaseFeatures = Tensor;
/// K x H x W per-pixel class probabilities.
using ProbTensor = Tensor;
/// d_hat x H/r x W/r embedding field.
using EmbeddingField = Tensor;

/// Per-pixel class ids; kIgnore marks pixels without a label.
struct LabelMap {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> labels;

  LabelMap() = default;
  LabelMap(int h, int w, std::uint8_t fill = kIgnore)
      : height(h), width(w), labels(static_cast<std::size_t>(h) * w, fill) {}

  std::uint8_t& operator()(int y, int x) { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t operator()(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  [[nodiscard]] std::size_t size() const { return labels.size(); }

  bool operator==(const LabelMap&) const = default;

  /// Throws ShapeError if any non-ignore label is >= num_classes.
  void validate(int num_classes) const;
};

/// mask[i] = labels[i] != ignore.
std::vector<std::uint8_t> mask_from_labels(const LabelMap& labels);

void require_shape(bool ok, const std::string& what);

}  // namespace drsl
