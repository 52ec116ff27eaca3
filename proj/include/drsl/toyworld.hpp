#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drsl/common.hpp"
#include "drsl/tensor.hpp"

namespace drsl {

/// Photometric/texture shift applied to target-domain scenes only.
struct DomainShift {
  double hue_delta = 0.0;         // fraction of the hue circle, [0,1]
  double brightness_delta = 0.0;  // added to HSV value, [-0.5,0.5]
  double noise_std = 0.0;         // additive Gaussian noise
  double texture_freq_scale = 1.0;

  bool operator==(const DomainShift&) const = default;
};

struct ToySpec {
  int image_size = 64;
  int num_classes = 5;  // class 0 is background
  int styles_per_class = 3;
  int min_shapes = 3;
  int max_shapes = 6;
  DomainShift shift;
  std::uint64_t seed = 0;

  bool operator==(const ToySpec&) const = default;

  /// Throws ConfigError when the spec cannot be generated.
  void validate() const;
};

void to_json(nlohmann::json& j, const ToySpec& s);
void from_json(const nlohmann::json& j, ToySpec& s);

enum class ShapeKind : std::uint8_t { kRect = 0, kDisc = 1, kBand = 2 };

/// One painted shape. Later records overwrite earlier ones.
struct Placement {
  ShapeKind kind = ShapeKind::kRect;
  int cls = 0;
  int style = 0;
  // kRect: [x0, x1) x [y0, y1).
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  // kDisc: pixel centers within `radius` of (cx, cy).
  // kBand: pixel centers within `radius` of the line at signed distance
  // `offset` from the image center along direction `angle`.
  double cx = 0, cy = 0, radius = 0, angle = 0, offset = 0;
};

struct Scene {
  ImageTensor image;
  LabelMap labels;
  std::vector<Placement> placements;
  int background_style = 0;
};

/// Pure function of (spec, domain, index). Geometry depends only on
/// (seed, index); the target domain re-renders it with the spec's shift.
Scene gen_scene(const ToySpec& spec, Domain domain, int index);

struct DatasetManifest {
  ToySpec spec;
  std::vector<std::string> source;         // image paths, relative to root
  std::vector<std::string> source_labels;  // label paths, relative to root
  std::vector<std::string> target;         // image paths only
  std::vector<std::string> target_eval_labels;  // under eval_only/, never read by training
  std::filesystem::path root;
};

inline constexpr const char* kEvalOnlyDir = "eval_only";

/// Writes source/, target/ and eval_only/ trees plus manifest.json.
/// Source scenes use indices [0, n_source); target scenes use
/// [n_source, n_source + n_target) so the splits never share geometry.
DatasetManifest gen_dataset(const ToySpec& spec, int n_source, int n_target,
                            const std::filesystem::path& out_dir);

void write_manifest(const DatasetManifest& m);
DatasetManifest read_manifest(const std::filesystem::path& manifest_or_dir);

/// Everything a training path may see: source images with labels and
/// unlabeled target images.
struct TrainingData {
  std::vector<ImageTensor> source_images;
  std::vector<LabelMap> source_labels;
  std::vector<ImageTensor> target_images;
  int num_classes = 0;
};

/// Loads only the training section of a manifest.
TrainingData load_training_data(const DatasetManifest& m);

/// Ground truth for the target split. Only evaluation code calls this.
std::vector<LabelMap> load_target_eval_labels(const DatasetManifest& m);

/// In-memory equivalent of gen_dataset + load, for tests and experiments.
struct ToyBenchmark {
  TrainingData train;
  std::vector<LabelMap> target_eval_labels;
};
ToyBenchmark make_benchmark(const ToySpec& spec, int n_source, int n_target);

}  // namespace drsl
