#include "drsl/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include <fmt/format.h>

namespace drsl {

SplitEvaluation evaluate_split(const SegNet& net, std::span<const ImageTensor> images,
                               std::span<const LabelMap> ground_truth) {
  require_shape(images.size() == ground_truth.size(), "evaluate: image/label count mismatch");
  SplitEvaluation e{ConfusionMatrix(net.config().num_classes), {}};
  for (std::size_t i = 0; i < images.size(); ++i)
    e.confusion += confusion(predict(net, images[i]), ground_truth[i], net.config().num_classes);
  e.iou = miou(e.confusion);
  return e;
}

AdaptHooks make_eval_hooks(const std::vector<ImageTensor>& target_images,
                           const std::vector<LabelMap>& target_ground_truth) {
  AdaptHooks h;
  h.pseudo_label_miou = [&target_ground_truth](const PseudoLabelSet& pl) -> std::optional<double> {
    const int k = static_cast<int>(pl.thresholds.size());
    ConfusionMatrix cm(k);
    for (std::size_t i = 0; i < pl.labels.size(); ++i) {
      LabelMap pred = pl.labels[i];
      for (std::size_t p = 0; p < pred.size(); ++p)
        if (!pl.masks[i][p]) pred.labels[p] = 0;
      cm += confusion(pred, target_ground_truth[i], k, pl.masks[i]);
    }
    return miou(cm).mean;
  };
  h.target_miou = [&](const SegNet& net) -> std::optional<double> {
    return evaluate_split(net, target_images, target_ground_truth).iou.mean;
  };
  return h;
}

nlohmann::json summary_json(const PipelineResult& r) {
  nlohmann::json rounds = nlohmann::json::array();
  for (const auto& rep : r.rounds) rounds.push_back(to_json(rep));
  return {{"group", r.group},
          {"label", r.label},
          {"config", r.config},
          {"source_only_miou", r.source_only_miou},
          {"final_miou", r.final_miou},
          {"rounds", rounds}};
}

PipelineResult run_adaptation(const TrainConfig& cfg, const SegNet& source_net, const ToyBenchmark& bench,
                              double source_only_miou) {
  PipelineResult r;
  r.config = cfg;
  r.source_only_miou = source_only_miou;
  const AdaptHooks hooks = make_eval_hooks(bench.train.target_images, bench.target_eval_labels);
  AdaptResult a = adapt(cfg, source_net, bench.train, hooks);
  r.rounds = std::move(a.reports);
  r.adapt_metrics = std::move(a.metrics);
  r.final_miou = r.rounds.empty() ? source_only_miou : r.rounds.back().target_miou.value_or(0.0);
  return r;
}

PipelineResult run_pipeline(const TrainConfig& cfg, const ToyBenchmark& bench) {
  SourceTrainResult src = train_source(cfg, bench.train);
  const double base = evaluate_split(src.net, bench.train.target_images, bench.target_eval_labels).iou.mean;
  PipelineResult r = run_adaptation(cfg, src.net, bench, base);
  r.source_metrics = std::move(src.metrics);
  return r;
}

std::vector<GridEntry> ablation_grid(const TrainConfig& base) {
  std::vector<GridEntry> g;
  for (auto [b, e] : {std::pair{0.0, 0.0}, std::pair{0.25, 0.1}}) {
    TrainConfig c = base;
    c.beta = b;
    c.eta = e;
    c.variant = Variant::kDrsl;
    g.push_back({"beta_eta", fmt::format("({}, {})", b, e), c, false});
  }
  for (int m : {1, 3, 5}) {
    TrainConfig c = base;
    c.modes = m;
    c.variant = Variant::kDrsl;
    g.push_back({"modes", fmt::format("M={}", m), c, m != base.modes});
  }
  for (int r : {1, 2, 4, 8}) {
    TrainConfig c = base;
    c.label_reduction_ratio = r;
    c.variant = Variant::kDrsl;
    g.push_back({"label_ratio", fmt::format("{}", r), c, r != base.label_reduction_ratio});
  }
  for (double gm : {0.0, 0.1}) {
    TrainConfig c = base;
    c.gamma = gm;
    c.variant = Variant::kDrslPlus;
    g.push_back({"gamma", fmt::format("{}", gm), c, false});
  }
  TrainConfig none = base;
  none.use_mmdl = false;
  none.variant = Variant::kDrsl;
  g.push_back({"no_mmdl", "without MMDL-FR", none, false});
  return g;
}

std::string sanitize_label(const std::string& s) {
  std::string out;
  for (char ch : s) {
    if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' || ch == '-')
      out += ch;
    else if (!out.empty() && out.back() != '_')
      out += '_';
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out;
}

std::vector<PipelineResult> run_grid(const TrainConfig& base, const ToyBenchmark& bench,
                                     const std::optional<std::filesystem::path>& out_dir) {
  const SourceTrainResult shared = train_source(base, bench.train);
  const double shared_miou =
      evaluate_split(shared.net, bench.train.target_images, bench.target_eval_labels).iou.mean;
  std::vector<PipelineResult> results;
  for (const auto& entry : ablation_grid(base)) {
    PipelineResult r = entry.needs_own_source ? run_pipeline(entry.config, bench)
                                              : run_adaptation(entry.config, shared.net, bench, shared_miou);
    r.group = entry.group;
    r.label = entry.label;
    if (out_dir) {
      const auto dir = *out_dir / (entry.group + "_" + sanitize_label(entry.label));
      std::filesystem::create_directories(dir);
      std::ofstream(dir / "summary.json") << summary_json(r).dump(2) << "\n";
      write_metrics_csv(r.adapt_metrics, dir / "metrics.csv");
    }
    results.push_back(std::move(r));
  }
  return results;
}

std::vector<nlohmann::json> collect_summaries(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_regular_file(dir / "summary.json")) files.push_back(dir / "summary.json");
  if (std::filesystem::is_directory(dir))
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
      if (e.is_regular_file() && e.path().filename() == "summary.json" && e.path() != dir / "summary.json")
        files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<nlohmann::json> out;
  for (const auto& f : files) {
    std::ifstream in(f);
    nlohmann::json j;
    in >> j;
    out.push_back(std::move(j));
  }
  return out;
}

namespace {

std::string pct(const nlohmann::json& v) {
  return v.is_number() ? fmt::format("{:.1f}", 100.0 * v.get<double>()) : std::string("-");
}

struct GroupLayout {
  const char* key;
  const char* title;
  const char* header;
  const char* row;
};

constexpr GroupLayout kLayouts[] = {
    {"beta_eta", "Effect of (beta, eta) values of the MMDL-FR module", "beta, eta", "DRSL (mIoU)"},
    {"no_mmdl", "Effect of MMDL-FR module on adaptation", "Methods", "mIoU"},
    {"modes", "Effect of number of modes (M)", "Number of Modes (M)", "mIoU"},
    {"label_ratio", "Effect of label reduction ratio on mIoU", "Label Reduction Ratio",
     "Adaptation Performance (mIoU)"},
    {"gamma", "Effect of cross domain mode consistency loss", "Loss weight gamma", "mIoU"},
};

}  // namespace

std::string render_report(std::span<const nlohmann::json> summaries) {
  std::map<std::string, std::vector<const nlohmann::json*>> groups;
  for (const auto& s : summaries) groups[s.value("group", std::string("run"))].push_back(&s);

  std::string out = "# Adaptation report\n\n";
  for (const auto& layout : kLayouts) {
    auto it = groups.find(layout.key);
    if (it == groups.end()) continue;
    const auto& runs = it->second;
    out += fmt::format("## {}\n\n", layout.title);
    if (std::string(layout.key) == "no_mmdl") {
      // Source / without / with, like the module-effect table.
      const nlohmann::json* with = nullptr;
      if (auto b = groups.find("beta_eta"); b != groups.end())
        for (const auto* r : b->second)
          if (r->value("label", std::string()) == "(0.25, 0.1)") with = r;
      out += fmt::format("| {} | Source | Without MMDL-FR | With MMDL-FR |\n|---|---|---|---|\n", layout.header);
      out += fmt::format("| {} | {} | {} | {} |\n\n", layout.row, pct(runs.front()->at("source_only_miou")),
                         pct(runs.front()->at("final_miou")), with ? pct(with->at("final_miou")) : "-");
      continue;
    }
    std::string head = fmt::format("| {} |", layout.header), sep = "|---|", row = fmt::format("| {} |", layout.row);
    for (const auto* r : runs) {
      head += fmt::format(" {} |", r->value("label", std::string("?")));
      sep += "---|";
      row += fmt::format(" {} |", pct(r->at("final_miou")));
    }
    out += head + "\n" + sep + "\n" + row + "\n\n";
  }

  out += "## Pseudo-label quality per round\n\n";
  out += "| Run | Round | delta | PL mIoU | Self-entropy | Coverage | Target mIoU after round |\n";
  out += "|---|---|---|---|---|---|---|\n";
  for (const auto& s : summaries) {
    const std::string name = s.value("group", std::string("run")) + " " + s.value("label", std::string());
    for (const auto& r : s.at("rounds"))
      out += fmt::format("| {} | {} | {:.2f} | {} | {:.3e} | {:.3f} | {} |\n", name, r.at("round").get<int>(),
                         r.at("delta").get<double>(), pct(r.at("pl_miou")), r.at("self_entropy").get<double>(),
                         r.at("coverage").get<double>(), pct(r.at("target_miou")));
  }
  return out;
}

}  // namespace drsl
