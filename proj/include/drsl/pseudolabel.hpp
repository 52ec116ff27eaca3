#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "drsl/tensor.hpp"

namespace drsl {

/// Frozen pseudo-labels for one adaptation round over the whole target split.
struct PseudoLabelSet {
  std::vector<LabelMap> labels;                   // y_hat_t, ignore where unselected
  std::vector<std::vector<std::uint8_t>> masks;   // b_t
  std::vector<double> thresholds;                 // per class; +inf when nothing was selected
  int round = 0;
  double delta = 0.0;

  [[nodiscard]] double coverage() const;
  /// Throws if some mask disagrees with labels != ignore.
  void validate() const;
};

/// min(0.20 + 0.05 * round, 1.0).
double delta_schedule(int round);

/// ceil(delta * n), snapped so floating noise in delta never adds a pixel.
std::size_t selection_count(double delta, std::size_t n);

/// Class-balanced selection: per argmax class, pooled across the split,
/// keep the ceil(delta * n_c) most confident pixels. Ties at the cut go to
/// the earlier (image, row, col).
PseudoLabelSet generate_pseudo_labels(std::span<const ProbTensor> probs, double delta, int round = 0);

struct PseudoLabelQuality {
  double pl_miou = 0.0;
  double coverage = 0.0;
  double self_entropy = 0.0;
};

PseudoLabelQuality eval_quality(const PseudoLabelSet& pl, std::span<const LabelMap> ground_truth,
                                std::span<const ProbTensor> probs);

/// Label PNGs (255 = unselected) plus pseudo_labels.json sidecar.
void save_pseudo_labels(const PseudoLabelSet& pl, const std::filesystem::path& dir);
PseudoLabelSet load_pseudo_labels(const std::filesystem::path& dir);

nlohmann::json sidecar_json(const PseudoLabelSet& pl);

}  // namespace drsl
