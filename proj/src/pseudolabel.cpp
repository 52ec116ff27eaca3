#include "drsl/pseudolabel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "drsl/image_io.hpp"
#include "drsl/metrics.hpp"

namespace drsl {

double PseudoLabelSet::coverage() const {
  std::size_t sel = 0, total = 0;
  for (const auto& m : masks) {
    for (auto b : m) sel += b != 0;
    total += m.size();
  }
  return total ? static_cast<double>(sel) / static_cast<double>(total) : 0.0;
}

void PseudoLabelSet::validate() const {
  if (labels.size() != masks.size()) throw ShapeError("pseudo-label/mask count mismatch");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (masks[i].size() != labels[i].size()) throw ShapeError("pseudo-label mask size mismatch");
    for (std::size_t p = 0; p < masks[i].size(); ++p)
      if ((masks[i][p] != 0) != (labels[i].labels[p] != kIgnore))
        throw ShapeError("pseudo-label mask disagrees with labels");
  }
}

double delta_schedule(int round) {
  if (round < 0) throw ConfigError("round must be >= 0");
  return std::min(static_cast<double>(20 + 5 * static_cast<long long>(round)) / 100.0, 1.0);
}

std::size_t selection_count(double delta, std::size_t n) {
  const double x = delta * static_cast<double>(n);
  const double r = std::nearbyint(x);
  const double snapped = std::abs(x - r) <= 1e-9 * std::max(1.0, x) ? r : std::ceil(x);
  return std::min(n, static_cast<std::size_t>(snapped));
}

PseudoLabelSet generate_pseudo_labels(std::span<const ProbTensor> probs, double delta, int round) {
  if (probs.empty()) throw ConfigError("pseudo-label generation needs a non-empty target split");
  if (!(delta > 0 && delta <= 1)) throw ConfigError("delta must be in (0, 1]");
  const int k = probs.front().channels;

  struct Candidate {
    double confidence;
    std::uint32_t image;
    std::uint32_t pixel;
  };
  std::vector<std::vector<Candidate>> pool(k);
  PseudoLabelSet pl;
  pl.round = round;
  pl.delta = delta;
  for (std::size_t img = 0; img < probs.size(); ++img) {
    const ProbTensor& p = probs[img];
    require_shape(p.channels == k, "pseudo-label: class count differs across images");
    const std::size_t n = p.plane_size();
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      for (int c = 1; c < k; ++c)
        if (p.data[c * n + i] > p.data[best * n + i]) best = c;
      pool[best].push_back({p.data[best * n + i], static_cast<std::uint32_t>(img), static_cast<std::uint32_t>(i)});
    }
    pl.labels.emplace_back(p.height, p.width, kIgnore);
    pl.masks.emplace_back(n, 0);
  }

  pl.thresholds.assign(k, std::numeric_limits<double>::infinity());
  for (int c = 0; c < k; ++c) {
    auto& cands = pool[c];
    if (cands.empty()) continue;
    const std::size_t keep = selection_count(delta, cands.size());
    auto order = [](const Candidate& a, const Candidate& b) {
      if (a.confidence != b.confidence) return a.confidence > b.confidence;
      if (a.image != b.image) return a.image < b.image;
      return a.pixel < b.pixel;
    };
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(), order);
    for (std::size_t j = 0; j < keep; ++j) {
      pl.labels[cands[j].image].labels[cands[j].pixel] = static_cast<std::uint8_t>(c);
      pl.masks[cands[j].image][cands[j].pixel] = 1;
    }
    if (keep > 0) pl.thresholds[c] = cands[keep - 1].confidence;
  }
  return pl;
}

PseudoLabelQuality eval_quality(const PseudoLabelSet& pl, std::span<const LabelMap> ground_truth,
                                std::span<const ProbTensor> probs) {
  if (ground_truth.size() != pl.labels.size()) throw ConfigError("eval_quality: ground truth missing");
  require_shape(probs.size() == pl.labels.size(), "eval_quality: probability count mismatch");
  const int k = probs.empty() ? 0 : probs.front().channels;
  ConfusionMatrix cm(k);
  for (std::size_t i = 0; i < pl.labels.size(); ++i) {
    // Unselected pixels carry ignore; restrict to the mask before comparing.
    LabelMap pred = pl.labels[i];
    for (std::size_t p = 0; p < pred.size(); ++p)
      if (!pl.masks[i][p]) pred.labels[p] = 0;
    cm += confusion(pred, ground_truth[i], k, pl.masks[i]);
  }
  PseudoLabelQuality q;
  q.pl_miou = miou(cm).mean;
  q.coverage = pl.coverage();
  q.self_entropy = normalized_self_entropy(probs);
  return q;
}

nlohmann::json sidecar_json(const PseudoLabelSet& pl) {
  nlohmann::json thresholds = nlohmann::json::array();
  for (double t : pl.thresholds) {
    if (std::isinf(t))
      thresholds.push_back(nullptr);
    else
      thresholds.push_back(t);
  }
  return {{"round", pl.round},
          {"delta", pl.delta},
          {"thresholds", thresholds},
          {"coverage", pl.coverage()},
          {"num_images", pl.labels.size()}};
}

void save_pseudo_labels(const PseudoLabelSet& pl, const std::filesystem::path& dir) {
  pl.validate();
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < pl.labels.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06zu.png", i);
    write_png_labels(dir / name, pl.labels[i]);
  }
  std::ofstream out(dir / "pseudo_labels.json");
  if (!out) throw IoError("cannot write pseudo-label sidecar in " + dir.string());
  out << sidecar_json(pl).dump(2) << "\n";
}

PseudoLabelSet load_pseudo_labels(const std::filesystem::path& dir) {
  std::ifstream in(dir / "pseudo_labels.json");
  if (!in) throw IoError("missing pseudo-label sidecar in " + dir.string());
  nlohmann::json j;
  in >> j;
  PseudoLabelSet pl;
  pl.round = j.at("round").get<int>();
  pl.delta = j.at("delta").get<double>();
  for (const auto& t : j.at("thresholds"))
    pl.thresholds.push_back(t.is_null() ? std::numeric_limits<double>::infinity() : t.get<double>());
  const auto n = j.at("num_images").get<std::size_t>();
  for (std::size_t i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06zu.png", i);
    pl.labels.push_back(read_png_labels(dir / name));
    pl.masks.push_back(mask_from_labels(pl.labels.back()));
  }
  pl.validate();
  return pl;
}

}  // namespace drsl
