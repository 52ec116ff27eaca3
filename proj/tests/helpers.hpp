#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "drsl/rng.hpp"
#include "drsl/tensor.hpp"
#include "drsl/trainer.hpp"

namespace drsl::test {

inline ProbTensor random_probs(int k, int h, int w, Rng& rng, double sharpness = 3.0) {
  ProbTensor p(k, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double sum = 0.0;
      for (int c = 0; c < k; ++c) {
        p(c, y, x) = std::exp(sharpness * rng.normal());
        sum += p(c, y, x);
      }
      for (int c = 0; c < k; ++c) p(c, y, x) /= sum;
    }
  return p;
}

inline ImageTensor random_image(int h, int w, Rng& rng) {
  ImageTensor img(3, h, w);
  for (double& v : img.data) v = rng.uniform();
  return img;
}

inline LabelMap random_labels(int h, int w, int k, Rng& rng) {
  LabelMap l(h, w, 0);
  for (auto& v : l.labels) v = static_cast<std::uint8_t>(rng.index(static_cast<std::size_t>(k)));
  return l;
}

/// Small, fast training configuration for unit tests.
inline TrainConfig tiny_config() {
  TrainConfig c;
  c.encoder_width = 8;
  c.embed_dim = 4;
  c.modes = 2;
  c.samples_per_class = 8;
  c.anchors_per_batch = 16;
  c.crop = 16;
  c.source_steps = 4;
  c.steps_per_round = 3;
  c.rounds = 2;
  c.lr_source = 0.01;
  c.lr_adapt = 0.005;
  return c;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("drsl_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace drsl::test
