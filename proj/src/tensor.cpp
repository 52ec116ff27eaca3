#include "drsl/tensor.hpp"

#include <cmath>

namespace drsl {

Tensor& Tensor::operator+=(const Tensor& o) {
  require_shape(same_shape(o), "tensor += shape mismatch");
  for (std::size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
  return *this;
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

void LabelMap::validate(int num_classes) const {
  for (std::uint8_t v : labels)
    if (v != kIgnore && v >= num_classes)
      throw ShapeError("label " + std::to_string(v) + " out of range for " +
                       std::to_string(num_classes) + " classes");
}

std::vector<std::uint8_t> mask_from_labels(const LabelMap& labels) {
  std::vector<std::uint8_t> m(labels.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = labels.labels[i] != kIgnore;
  return m;
}

void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace drsl
