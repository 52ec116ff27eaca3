#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "drsl/checkpoint.hpp"
#include "drsl/experiment.hpp"
#include "drsl/gradcheck.hpp"
#include "drsl/image_io.hpp"
#include "drsl/pseudolabel.hpp"
#include "drsl/trainer.hpp"

namespace fs = std::filesystem;
using namespace drsl;

namespace {

void write_json(const nlohmann::json& j, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_text(const std::string& text, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

TrainConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
  TrainConfig cfg = path.empty() ? TrainConfig{} : load_train_config(path);
  cfg = apply_overrides(cfg, overrides);
  cfg.validate();
  return cfg;
}

ToySpec resolve_spec(const std::string& path, const std::vector<std::string>& overrides) {
  nlohmann::json j = nlohmann::json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path);
    j = nlohmann::json::parse(in, nullptr, true, true);
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override must be key=value: " + o);
    const std::string key = o.substr(0, eq);
    const std::string value = o.substr(eq + 1);
    try {
      j[key] = nlohmann::json::parse(value);
    } catch (const nlohmann::json::parse_error&) {
      j[key] = value;
    }
  }
  ToySpec spec = j.get<ToySpec>();
  spec.validate();
  return spec;
}

// Appends translated copies of source images. A file in `dir` with the same
// name as a source image reuses that image's labels.
void add_translated_source(const DatasetManifest& m, const std::string& dir, TrainingData& data) {
  if (dir.empty()) return;
  if (!fs::is_directory(dir)) throw IoError("translated_source_dir not found: " + dir);
  int added = 0;
  for (std::size_t i = 0; i < m.source.size(); ++i) {
    const fs::path candidate = fs::path(dir) / fs::path(m.source[i]).filename();
    if (!fs::exists(candidate)) continue;
    data.source_images.push_back(read_png_rgb(candidate));
    data.source_labels.push_back(data.source_labels[i]);
    ++added;
  }
  fmt::print("added {} translated source images from {}\n", added, dir);
}

TrainingData load_for_training(const DatasetManifest& m, const TrainConfig& cfg) {
  TrainingData data = load_training_data(m);
  add_translated_source(m, cfg.translated_source_dir, data);
  return data;
}

void print_rounds(const std::vector<RoundReport>& reports) {
  for (const auto& r : reports) {
    fmt::print("round {}  delta {:.2f}  coverage {:.3f}  self-entropy {:.4f}", r.round, r.delta, r.coverage,
               r.self_entropy);
    if (r.pl_miou) fmt::print("  pl mIoU {:.4f}", *r.pl_miou);
    if (r.target_miou) fmt::print("  target mIoU {:.4f}", *r.target_miou);
    fmt::print("\n");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distribution-regularized self-training for segmentation domain adaptation"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Render a toyworld source/target benchmark");
  std::string spec_path, gen_out;
  std::vector<std::string> spec_sets;
  int n_source = 24, n_target = 24;
  gen->add_option("--spec", spec_path, "toyworld spec JSON")->check(CLI::ExistingFile);
  gen->add_option("--set", spec_sets, "spec override key=value");
  gen->add_option("--n-source", n_source)->check(CLI::PositiveNumber);
  gen->add_option("--n-target", n_target)->check(CLI::PositiveNumber);
  gen->add_option("--out", gen_out)->required();

  // Options shared by training commands.
  std::string data_dir, config_path, out_dir, checkpoint_dir;
  std::vector<std::string> sets;
  auto add_config = [&](CLI::App* c) {
    c->add_option("--config", config_path, "training config JSON")->check(CLI::ExistingFile);
    c->add_option("--set", sets, "config override key=value");
  };

  auto* train = app.add_subcommand("train-source", "Train the source model");
  train->add_option("--data", data_dir, "dataset directory or manifest")->required();
  train->add_option("--out", out_dir, "run directory")->required();
  add_config(train);

  auto* pl_cmd = app.add_subcommand("pseudo-label", "Generate class-balanced pseudo-labels");
  int pl_round = 0;
  pl_cmd->add_option("--data", data_dir)->required();
  pl_cmd->add_option("--checkpoint", checkpoint_dir)->required()->check(CLI::ExistingDirectory);
  pl_cmd->add_option("--round", pl_round, "round index (sets delta)")->check(CLI::NonNegativeNumber);
  pl_cmd->add_option("--out", out_dir)->required();

  auto* adapt_cmd = app.add_subcommand("adapt", "Self-training adaptation rounds");
  std::string initial_pl;
  bool with_eval = false;
  adapt_cmd->add_option("--data", data_dir)->required();
  adapt_cmd->add_option("--checkpoint", checkpoint_dir, "source checkpoint")->required()->check(
      CLI::ExistingDirectory);
  adapt_cmd->add_option("--pseudo-labels", initial_pl, "round-0 pseudo-labels")->check(CLI::ExistingDirectory);
  adapt_cmd->add_option("--out", out_dir)->required();
  adapt_cmd->add_flag("--eval", with_eval, "score pseudo-labels and rounds against eval-only labels");
  add_config(adapt_cmd);

  auto* eval_cmd = app.add_subcommand("evaluate", "mIoU of a checkpoint");
  std::string split = "target", eval_json;
  eval_cmd->add_option("--data", data_dir)->required();
  eval_cmd->add_option("--checkpoint", checkpoint_dir)->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--split", split)->check(CLI::IsMember({"source", "target"}));
  eval_cmd->add_option("--json", eval_json, "write the result here");

  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every loss");
  std::string gc_loss = "all";
  std::uint64_t gc_seed = 0;
  gc_cmd->add_option("--loss", gc_loss, "seg_src|seg_tgt|emb|cls|mcl|ma|all");
  gc_cmd->add_option("--seed", gc_seed);

  auto* report_cmd = app.add_subcommand("report", "Render run summaries as markdown tables");
  std::string runs_dir, report_out;
  report_cmd->add_option("--runs", runs_dir)->required()->check(CLI::ExistingDirectory);
  report_cmd->add_option("--out", report_out, "markdown file (default: stdout)");

  auto* ablate_cmd = app.add_subcommand("ablate", "Run the ablation grid and write summaries");
  ablate_cmd->add_option("--data", data_dir)->required();
  ablate_cmd->add_option("--out", out_dir)->required();
  add_config(ablate_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) {
      const ToySpec spec = resolve_spec(spec_path, spec_sets);
      const DatasetManifest m = gen_dataset(spec, n_source, n_target, gen_out);
      fmt::print("wrote {} source and {} target images to {}\n", m.source.size(), m.target.size(), gen_out);
    } else if (*train) {
      const TrainConfig cfg = resolve_config(config_path, sets);
      const DatasetManifest m = read_manifest(data_dir);
      const TrainingData data = load_for_training(m, cfg);
      fs::create_directories(out_dir);
      write_json(cfg, fs::path(out_dir) / "config.json");
      const auto t0 = std::chrono::steady_clock::now();
      SourceTrainResult r = train_source(cfg, data);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      save_checkpoint(r.net, fs::path(out_dir) / "checkpoints" / "source");
      write_metrics_csv(r.metrics, fs::path(out_dir) / "metrics.csv");
      if (cfg.use_mmdl) write_mode_centers_csv(r.net, fs::path(out_dir) / "mode_centers.csv");
      fmt::print("trained {} steps in {:.1f}s, final loss {:.4f}\n", cfg.source_steps, secs,
                 r.metrics.empty() ? 0.0 : r.metrics.back().terms.total);
    } else if (*pl_cmd) {
      const DatasetManifest m = read_manifest(data_dir);
      const TrainingData data = load_training_data(m);
      const SegNet net = load_checkpoint(checkpoint_dir);
      const auto probs = predict_probs(net, data.target_images);
      const PseudoLabelSet pl = generate_pseudo_labels(probs, delta_schedule(pl_round), pl_round);
      save_pseudo_labels(pl, out_dir);
      fmt::print("round {} delta {:.2f} coverage {:.4f}\n", pl.round, pl.delta, pl.coverage());
    } else if (*adapt_cmd) {
      const TrainConfig cfg = resolve_config(config_path, sets);
      const DatasetManifest m = read_manifest(data_dir);
      const TrainingData data = load_for_training(m, cfg);
      const SegNet source = load_checkpoint(checkpoint_dir);
      const fs::path run(out_dir);
      fs::create_directories(run);
      write_json(cfg, run / "config.json");

      std::vector<LabelMap> gt;
      AdaptHooks hooks;
      if (with_eval) {
        gt = load_target_eval_labels(m);
        hooks = make_eval_hooks(data.target_images, gt);
      }
      hooks.on_pseudo_labels = [&](const PseudoLabelSet& pl) {
        save_pseudo_labels(pl, run / "pseudo_labels" / fmt::format("round_{}", pl.round));
      };
      hooks.on_round_end = [&](int round, const SegNet& net) {
        save_checkpoint(net, run / "checkpoints" / fmt::format("round_{}", round));
      };
      std::optional<PseudoLabelSet> initial;
      if (!initial_pl.empty()) initial = load_pseudo_labels(initial_pl);

      AdaptResult r = adapt(cfg, source, data, hooks, initial ? &*initial : nullptr);
      save_checkpoint(r.net, run / "checkpoints" / "final");
      write_metrics_csv(r.metrics, run / "metrics.csv");
      nlohmann::json reports = nlohmann::json::array();
      for (const auto& rep : r.reports) reports.push_back(to_json(rep));
      write_json(reports, run / "round_reports.json");
      if (cfg.use_mmdl) write_mode_centers_csv(r.net, run / "mode_centers.csv");
      print_rounds(r.reports);
    } else if (*eval_cmd) {
      const DatasetManifest m = read_manifest(data_dir);
      const SegNet net = load_checkpoint(checkpoint_dir);
      const TrainingData data = load_training_data(m);
      SplitEvaluation ev;
      if (split == "target") {
        const auto gt = load_target_eval_labels(m);
        ev = evaluate_split(net, data.target_images, gt);
      } else {
        ev = evaluate_split(net, data.source_images, data.source_labels);
      }
      nlohmann::json per_class = nlohmann::json::array();
      for (double v : ev.iou.per_class) per_class.push_back(std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v));
      const nlohmann::json out{{"split", split}, {"miou", ev.iou.mean}, {"per_class_iou", per_class}};
      fmt::print("{} mIoU {:.4f}\n", split, ev.iou.mean);
      if (!eval_json.empty()) write_json(out, eval_json);
    } else if (*gc_cmd) {
      std::vector<gradcheck::LossId> ids;
      if (gc_loss == "all") {
        ids = gradcheck::all_losses();
      } else if (auto id = gradcheck::parse_loss_id(gc_loss)) {
        ids.push_back(*id);
      } else {
        std::cerr << "unknown loss id: " << gc_loss << '\n';
        return 2;
      }
      bool ok = true;
      for (auto id : ids) {
        const gradcheck::Result r = gradcheck::run(id, gc_seed);
        fmt::print("{:<8} max rel err {:.3e}  worst {}  ({} entries)  {}\n", gradcheck::to_string(id),
                   r.max_rel_error, r.worst, r.checked, r.passed(gradcheck::kTolerance) ? "ok" : "FAIL");
        ok = ok && r.passed(gradcheck::kTolerance);
      }
      return ok ? 0 : 1;
    } else if (*report_cmd) {
      const auto summaries = collect_summaries(runs_dir);
      const std::string md = render_report(summaries);
      if (report_out.empty()) {
        std::cout << md;
      } else {
        write_text(md, report_out);
      }
    } else if (*ablate_cmd) {
      const TrainConfig cfg = resolve_config(config_path, sets);
      const DatasetManifest m = read_manifest(data_dir);
      ToyBenchmark bench{load_for_training(m, cfg), load_target_eval_labels(m)};
      const auto results = run_grid(cfg, bench, fs::path(out_dir));
      std::vector<nlohmann::json> summaries;
      for (const auto& r : results) summaries.push_back(summary_json(r));
      write_text(render_report(summaries), fs::path(out_dir) / "report.md");
      fmt::print("{} runs written to {}\n", results.size(), out_dir);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
