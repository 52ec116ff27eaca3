#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace drsl::gradcheck {

/// A block of inputs to perturb in place, with the analytic gradient
/// computed at the unperturbed point.
struct Block {
  std::string name;
  std::span<double> values;
  std::vector<double> analytic;
};

struct Result {
  double max_rel_error = 0.0;
  std::string worst;  // "<block>[<index>]"
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;

  [[nodiscard]] bool passed(double tol) const { return max_rel_error < tol; }
  void merge(const Result& o);
};

inline constexpr double kStep = 1e-4;
inline constexpr double kTolerance = 1e-4;

/// |a - n| / max(|a|, |n|, 1e-6).
double relative_error(double analytic, double numeric);

/// Central differences of `loss` for every entry of every block.
Result check(const std::function<double()>& loss, std::span<Block> blocks, double step = kStep);

enum class LossId { kSegSource, kSegTarget, kEmb, kCls, kMcl, kMa };

std::optional<LossId> parse_loss_id(const std::string& s);
const char* to_string(LossId id);
std::vector<LossId> all_losses();

/// Checks one loss on a 64-bit micro-model: every network parameter through
/// the full forward pass, plus the loss's direct inputs (logits, or sample
/// embeddings and mode centers).
Result run(LossId id, std::uint64_t seed);

}  // namespace drsl::gradcheck
