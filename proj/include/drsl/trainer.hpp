#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drsl/pseudolabel.hpp"
#include "drsl/rng.hpp"
#include "drsl/segnet.hpp"
#include "drsl/toyworld.hpp"

namespace drsl {

enum class Variant { kDrsl, kDrslPlus };

struct TrainConfig {
  // Loss weights and margins.
  double beta = 0.25;
  double eta = 0.1;
  double gamma = 0.1;
  double alpha = 1.0;
  double alpha1 = 1.0;
  // MMDL-FR head.
  double sigma2 = 0.5;
  int modes = 3;                  // M
  int samples_per_class = 64;     // T_e (300 at full scale)
  int anchors_per_batch = 128;    // N_e
  int label_reduction_ratio = 2;
  bool use_mmdl = true;
  int encoder_width = 64;
  int embed_dim = 16;
  // Optimization.
  int crop = 64;                  // 512 at full scale
  double lr_source = 2.5e-4;
  double lr_adapt = 5e-5;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double lr_power = 0.9;
  double scale_min = 0.5;
  double scale_max = 1.5;
  double flip_prob = 0.5;
  int source_steps = 2000;
  int source_batch = 1;
  int rounds = 3;
  int steps_per_round = 1000;
  std::uint64_t seed = 0;
  Variant variant = Variant::kDrsl;
  // Directory of pre-translated source images used alongside the originals.
  std::string translated_source_dir;

  void validate() const;
  [[nodiscard]] ModelConfig model_config(int num_classes) const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

TrainConfig load_train_config(const std::filesystem::path& path);
/// Applies "key=value" overrides; values parse as JSON, else as strings.
TrainConfig apply_overrides(const TrainConfig& base, std::span<const std::string> overrides);

struct Crop {
  ImageTensor image;
  LabelMap labels;
};

struct AugmentParams {
  double scale = 1.0;
  bool flip = false;
  int offset_y = 0;  // crop origin in the scaled image; negative means padding
  int offset_x = 0;
};

/// Scale (bilinear image / nearest labels), optional horizontal flip, then a
/// crop x crop window; out-of-image pixels become 0 / ignore.
Crop apply_augment(const ImageTensor& image, const LabelMap& labels, const AugmentParams& p, int crop);
AugmentParams draw_augment(int height, int width, const TrainConfig& cfg, Rng& rng);
Crop augment(const ImageTensor& image, const LabelMap& labels, const TrainConfig& cfg, Rng& rng);

LabelMap resize_labels_nearest(const LabelMap& labels, int out_h, int out_w);

/// Every loss term of one step, before weighting.
struct LossTerms {
  double seg_source = 0.0;
  double seg_target = 0.0;
  double emb = 0.0;         // L_emb / |E_s| (source training)
  double ma = 0.0;          // L_ma
  double cls_source = 0.0;
  double cls_target = 0.0;
  double mcl = 0.0;
  double total = 0.0;
  std::size_t source_samples = 0;
  std::size_t target_samples = 0;
  std::size_t triplets = 0;
};

double compose_source_loss(const LossTerms& t, const TrainConfig& cfg);
double compose_drsl_loss(const LossTerms& t, const TrainConfig& cfg);
double compose_drsl_plus_loss(const LossTerms& t, const TrainConfig& cfg);

/// Source objective over a batch of labeled crops. When `accumulate` is
/// set, parameter gradients of the weighted total are added to `net`.
LossTerms loss_src(SegNet& net, std::span<const Crop> batch, const TrainConfig& cfg, Rng& sample_rng,
                   bool accumulate);

/// Adaptation objective on one source crop and one pseudo-labeled target
/// crop. kDrslPlus adds gamma * L_mcl.
LossTerms loss_adapt(SegNet& net, const Crop& source, const Crop& target, Variant variant, const TrainConfig& cfg,
                     Rng& sample_rng, Rng& triplet_rng, bool accumulate);

LossTerms loss_drsl(SegNet& net, const Crop& source, const Crop& target, const TrainConfig& cfg, Rng& sample_rng,
                    Rng& triplet_rng, bool accumulate);
LossTerms loss_drsl_plus(SegNet& net, const Crop& source, const Crop& target, const TrainConfig& cfg,
                         Rng& sample_rng, Rng& triplet_rng, bool accumulate);

/// SGD with momentum and L2 weight decay (decay folded into the gradient).
class Sgd {
 public:
  Sgd(const nn::ParamStore& params, double momentum, double weight_decay);
  void step(nn::ParamStore& params, double lr);

 private:
  double momentum_;
  double weight_decay_;
  std::vector<std::vector<double>> velocity_;
};

double poly_lr(double base, int step, int total_steps, double power);

struct MetricRow {
  std::string phase;  // "source" or "adapt"
  int round = -1;
  int step = 0;
  double lr = 0.0;
  LossTerms terms;
};

std::string metrics_csv(std::span<const MetricRow> rows);
void write_metrics_csv(std::span<const MetricRow> rows, const std::filesystem::path& path);

struct SourceTrainResult {
  SegNet net;
  std::vector<MetricRow> metrics;
};

/// SGD + poly decay from lr_source on loss_src. Deterministic given cfg.seed.
SourceTrainResult train_source(const TrainConfig& cfg, const TrainingData& data);

struct RoundReport {
  int round = 0;
  double delta = 0.0;
  std::vector<double> thresholds;
  double coverage = 0.0;
  double self_entropy = 0.0;            // of the model that produced the pseudo-labels
  std::optional<double> pl_miou;        // needs ground truth; filled by an evaluator
  std::optional<double> target_miou;    // after this round's fine-tuning
};

nlohmann::json to_json(const RoundReport& r);

/// Hooks through which an evaluator that owns target ground truth can
/// observe adaptation. The adaptation loop itself never sees labels.
struct AdaptHooks {
  std::function<std::optional<double>(const PseudoLabelSet&)> pseudo_label_miou;
  std::function<std::optional<double>(const SegNet&)> target_miou;
  std::function<void(const PseudoLabelSet&)> on_pseudo_labels;
  std::function<void(int round, const SegNet&)> on_round_end;
};

struct AdaptResult {
  SegNet net;
  std::vector<RoundReport> reports;
  std::vector<MetricRow> metrics;
};

/// Round-based self-training from a source checkpoint. `initial` replaces
/// the generated pseudo-labels of round 0 when provided.
AdaptResult adapt(const TrainConfig& cfg, const SegNet& source_net, const TrainingData& data,
                  const AdaptHooks& hooks = {}, const PseudoLabelSet* initial = nullptr);

/// Full-image probabilities for every image (eval mode).
std::vector<ProbTensor> predict_probs(const SegNet& net, std::span<const ImageTensor> images);

}  // namespace drsl
