#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "drsl/tensor.hpp"

namespace drsl {

/// K x K counts, rows = ground truth, columns = prediction.
struct ConfusionMatrix {
  int num_classes = 0;
  std::vector<std::int64_t> counts;

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int k) : num_classes(k), counts(static_cast<std::size_t>(k) * k, 0) {}

  std::int64_t& operator()(int gt, int pred) { return counts[static_cast<std::size_t>(gt) * num_classes + pred]; }
  std::int64_t operator()(int gt, int pred) const {
    return counts[static_cast<std::size_t>(gt) * num_classes + pred];
  }
  [[nodiscard]] std::int64_t total() const;

  ConfusionMatrix& operator+=(const ConfusionMatrix& o);
  bool operator==(const ConfusionMatrix&) const = default;
};

/// Ground-truth ignore pixels are skipped. A non-empty `mask` restricts the
/// count to pixels where mask != 0.
ConfusionMatrix confusion(const LabelMap& pred, const LabelMap& gt, int num_classes,
                          std::span<const std::uint8_t> mask = {});

struct MeanIoU {
  std::vector<double> per_class;  // NaN for classes absent from both GT and prediction
  double mean = 0.0;
};

MeanIoU miou(const ConfusionMatrix& cm);

/// Mean per-pixel entropy of the class distribution, divided by ln K.
double normalized_self_entropy(std::span<const ProbTensor> probs);

}  // namespace drsl
