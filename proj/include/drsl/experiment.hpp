#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drsl/metrics.hpp"
#include "drsl/trainer.hpp"

namespace drsl {

struct SplitEvaluation {
  ConfusionMatrix confusion;
  MeanIoU iou;
};

/// Predicts every image and accumulates one confusion matrix.
SplitEvaluation evaluate_split(const SegNet& net, std::span<const ImageTensor> images,
                               std::span<const LabelMap> ground_truth);

/// Evaluation hooks backed by target ground truth held outside the trainer.
AdaptHooks make_eval_hooks(const std::vector<ImageTensor>& target_images,
                           const std::vector<LabelMap>& target_ground_truth);

/// One source-training + adaptation run on an in-memory benchmark.
struct PipelineResult {
  std::string group;
  std::string label;
  TrainConfig config;
  double source_only_miou = 0.0;
  double final_miou = 0.0;
  std::vector<RoundReport> rounds;
  std::vector<MetricRow> source_metrics;
  std::vector<MetricRow> adapt_metrics;
};

nlohmann::json summary_json(const PipelineResult& r);

/// Adapts from an existing source model.
PipelineResult run_adaptation(const TrainConfig& cfg, const SegNet& source_net, const ToyBenchmark& bench,
                              double source_only_miou);
/// Trains the source model first.
PipelineResult run_pipeline(const TrainConfig& cfg, const ToyBenchmark& bench);

struct GridEntry {
  std::string group;  // "beta_eta", "modes", "label_ratio", "gamma", "no_mmdl"
  std::string label;  // column header, e.g. "(0.25, 0.1)" or "M=3"
  TrainConfig config;
  bool needs_own_source = false;  // architecture differs from the base run
};

/// (beta, eta) in {(0,0), (0.25,0.1)}, M in {1,3,5}, label ratio in
/// {1,2,4,8}, gamma in {0, 0.1} (DRSL+), plus the pipeline without MMDL-FR.
std::vector<GridEntry> ablation_grid(const TrainConfig& base);

/// Runs every entry. Entries that keep the base architecture share one
/// source model. When `out_dir` is set, each run writes
/// <out_dir>/<group>_<label>/{summary.json, metrics.csv}.
std::vector<PipelineResult> run_grid(const TrainConfig& base, const ToyBenchmark& bench,
                                     const std::optional<std::filesystem::path>& out_dir = std::nullopt);

/// Markdown tables in the layout of the ablation tables, one per group,
/// plus a per-round pseudo-label table for every run.
std::string render_report(std::span<const nlohmann::json> summaries);
std::vector<nlohmann::json> collect_summaries(const std::filesystem::path& dir);

std::string sanitize_label(const std::string& s);

}  // namespace drsl
