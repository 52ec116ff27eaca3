#include "drsl/metrics.hpp"

#include <cmath>
#include <limits>

namespace drsl {

std::int64_t ConfusionMatrix::total() const {
  std::int64_t t = 0;
  for (auto v : counts) t += v;
  return t;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
  require_shape(num_classes == o.num_classes, "confusion matrices differ in class count");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += o.counts[i];
  return *this;
}

ConfusionMatrix confusion(const LabelMap& pred, const LabelMap& gt, int num_classes,
                          std::span<const std::uint8_t> mask) {
  require_shape(pred.height == gt.height && pred.width == gt.width, "confusion: shape mismatch");
  require_shape(mask.empty() || mask.size() == gt.size(), "confusion: mask size mismatch");
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const int g = gt.labels[i];
    const int p = pred.labels[i];
    if (g == kIgnore || (!mask.empty() && !mask[i])) continue;
    require_shape(g < num_classes, "confusion: ground truth out of range");
    if (p == kIgnore || p >= num_classes) throw ShapeError("confusion: prediction missing on a labeled pixel");
    ++cm(g, p);
  }
  return cm;
}

MeanIoU miou(const ConfusionMatrix& cm) {
  MeanIoU out;
  const int k = cm.num_classes;
  out.per_class.assign(k, std::numeric_limits<double>::quiet_NaN());
  double sum = 0;
  int present = 0;
  for (int c = 0; c < k; ++c) {
    std::int64_t fp = 0, fn = 0;
    for (int o = 0; o < k; ++o) {
      if (o == c) continue;
      fp += cm(o, c);
      fn += cm(c, o);
    }
    const std::int64_t tp = cm(c, c);
    const std::int64_t denom = tp + fp + fn;
    if (denom == 0) continue;
    out.per_class[c] = static_cast<double>(tp) / static_cast<double>(denom);
    sum += out.per_class[c];
    ++present;
  }
  out.mean = present ? sum / present : 0.0;
  return out;
}

double normalized_self_entropy(std::span<const ProbTensor> probs) {
  double sum = 0;
  std::size_t pixels = 0;
  int k = 0;
  for (const auto& p : probs) {
    k = p.channels;
    const std::size_t n = p.plane_size();
    for (std::size_t i = 0; i < n; ++i) {
      double h = 0;
      for (int c = 0; c < p.channels; ++c) {
        const double v = p.data[c * n + i];
        if (v > 0) h -= v * std::log(v);
      }
      sum += h;
    }
    pixels += n;
  }
  if (pixels == 0 || k < 2) return 0.0;
  return sum / static_cast<double>(pixels) / std::log(static_cast<double>(k));
}

}  // namespace drsl
