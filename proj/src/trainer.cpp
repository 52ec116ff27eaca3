#include "drsl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "drsl/alignment.hpp"
#include "drsl/metrics.hpp"
#include "drsl/mmdl.hpp"

namespace drsl {

void TrainConfig::validate() const {
  if (beta < 0 || eta < 0 || gamma < 0) throw ConfigError("loss weights must be >= 0");
  if (alpha < 0 || alpha1 < 0) throw ConfigError("margins must be >= 0");
  if (crop <= 0 || crop % kEncoderStride != 0) throw ConfigError("crop must be a positive multiple of 4");
  if (label_reduction_ratio < 1 || crop % label_reduction_ratio != 0)
    throw ConfigError("crop must be divisible by label_reduction_ratio");
  if (!(scale_min > 0) || scale_min > scale_max) throw ConfigError("scale_range must satisfy 0 < min <= max");
  if (flip_prob < 0 || flip_prob > 1) throw ConfigError("flip_prob must be in [0,1]");
  if (source_steps < 0 || steps_per_round < 0 || rounds < 0) throw ConfigError("step counts must be >= 0");
  if (source_batch < 1) throw ConfigError("source_batch must be >= 1");
  if (samples_per_class < 1 || anchors_per_batch < 0) throw ConfigError("sample counts invalid");
  if (lr_source < 0 || lr_adapt < 0 || momentum < 0 || weight_decay < 0) throw ConfigError("optimizer settings invalid");
  model_config(2).validate();
}

ModelConfig TrainConfig::model_config(int num_classes) const {
  ModelConfig m;
  m.num_classes = num_classes;
  m.encoder_width = encoder_width;
  m.embed_dim = embed_dim;
  m.modes = modes;
  m.sigma2 = sigma2;
  m.label_ratio = label_reduction_ratio;
  m.init_seed = seed;
  return m;
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"beta", c.beta},
                     {"eta", c.eta},
                     {"gamma", c.gamma},
                     {"alpha", c.alpha},
                     {"alpha1", c.alpha1},
                     {"sigma2", c.sigma2},
                     {"M", c.modes},
                     {"T_e", c.samples_per_class},
                     {"N_e", c.anchors_per_batch},
                     {"label_reduction_ratio", c.label_reduction_ratio},
                     {"use_mmdl", c.use_mmdl},
                     {"encoder_width", c.encoder_width},
                     {"embed_dim", c.embed_dim},
                     {"crop", c.crop},
                     {"lr_source", c.lr_source},
                     {"lr_adapt", c.lr_adapt},
                     {"momentum", c.momentum},
                     {"weight_decay", c.weight_decay},
                     {"lr_power", c.lr_power},
                     {"scale_range", {c.scale_min, c.scale_max}},
                     {"flip_prob", c.flip_prob},
                     {"source_steps", c.source_steps},
                     {"source_batch", c.source_batch},
                     {"rounds", c.rounds},
                     {"steps_per_round", c.steps_per_round},
                     {"seed", c.seed},
                     {"variant", c.variant == Variant::kDrsl ? "DRSL" : "DRSL+"},
                     {"translated_source_dir", c.translated_source_dir}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  static const std::vector<std::string> known = {
      "beta", "eta", "gamma", "alpha", "alpha1", "sigma2", "M", "T_e", "N_e", "label_reduction_ratio",
      "use_mmdl", "encoder_width", "embed_dim", "crop", "lr_source", "lr_adapt", "momentum", "weight_decay",
      "lr_power", "scale_range", "flip_prob", "source_steps", "source_batch", "rounds", "steps_per_round",
      "seed", "variant", "translated_source_dir"};
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError("unknown config key: " + key);
  const TrainConfig d;
  try {
    c.beta = j.value("beta", d.beta);
    c.eta = j.value("eta", d.eta);
    c.gamma = j.value("gamma", d.gamma);
    c.alpha = j.value("alpha", d.alpha);
    c.alpha1 = j.value("alpha1", d.alpha1);
    c.sigma2 = j.value("sigma2", d.sigma2);
    c.modes = j.value("M", d.modes);
    c.samples_per_class = j.value("T_e", d.samples_per_class);
    c.anchors_per_batch = j.value("N_e", d.anchors_per_batch);
    c.label_reduction_ratio = j.value("label_reduction_ratio", d.label_reduction_ratio);
    c.use_mmdl = j.value("use_mmdl", d.use_mmdl);
    c.encoder_width = j.value("encoder_width", d.encoder_width);
    c.embed_dim = j.value("embed_dim", d.embed_dim);
    c.crop = j.value("crop", d.crop);
    c.lr_source = j.value("lr_source", d.lr_source);
    c.lr_adapt = j.value("lr_adapt", d.lr_adapt);
    c.momentum = j.value("momentum", d.momentum);
    c.weight_decay = j.value("weight_decay", d.weight_decay);
    c.lr_power = j.value("lr_power", d.lr_power);
    if (j.contains("scale_range")) {
      const auto r = j.at("scale_range").get<std::vector<double>>();
      if (r.size() != 2) throw ConfigError("scale_range needs two values");
      c.scale_min = r[0];
      c.scale_max = r[1];
    } else {
      c.scale_min = d.scale_min;
      c.scale_max = d.scale_max;
    }
    c.flip_prob = j.value("flip_prob", d.flip_prob);
    c.source_steps = j.value("source_steps", d.source_steps);
    c.source_batch = j.value("source_batch", d.source_batch);
    c.rounds = j.value("rounds", d.rounds);
    c.steps_per_round = j.value("steps_per_round", d.steps_per_round);
    c.seed = j.value("seed", d.seed);
    const std::string v = j.value("variant", std::string("DRSL"));
    if (v == "DRSL")
      c.variant = Variant::kDrsl;
    else if (v == "DRSL+")
      c.variant = Variant::kDrslPlus;
    else
      throw ConfigError("variant must be DRSL or DRSL+");
    c.translated_source_dir = j.value("translated_source_dir", d.translated_source_dir);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed config " + path.string() + ": " + e.what());
  }
  TrainConfig c = j.get<TrainConfig>();
  c.validate();
  return c;
}

TrainConfig apply_overrides(const TrainConfig& base, std::span<const std::string> overrides) {
  nlohmann::json j = base;
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: " + kv);
    const std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
    if (!j.contains(key)) throw ConfigError("unknown config key: " + key);
    try {
      j[key] = nlohmann::json::parse(value);
    } catch (const nlohmann::json::exception&) {
      j[key] = value;
    }
  }
  TrainConfig c = j.get<TrainConfig>();
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Augmentation

LabelMap resize_labels_nearest(const LabelMap& labels, int out_h, int out_w) {
  LabelMap out(out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    const int sy = std::min(labels.height - 1, static_cast<int>((y + 0.5) * labels.height / out_h));
    for (int x = 0; x < out_w; ++x) {
      const int sx = std::min(labels.width - 1, static_cast<int>((x + 0.5) * labels.width / out_w));
      out(y, x) = labels(sy, sx);
    }
  }
  return out;
}

AugmentParams draw_augment(int height, int width, const TrainConfig& cfg, Rng& rng) {
  AugmentParams p;
  p.scale = rng.uniform(cfg.scale_min, cfg.scale_max);
  p.flip = rng.bernoulli(cfg.flip_prob);
  const int sh = std::max(1, static_cast<int>(std::lround(height * p.scale)));
  const int sw = std::max(1, static_cast<int>(std::lround(width * p.scale)));
  auto offset = [&](int size) {
    const int lo = std::min(0, size - cfg.crop), hi = std::max(0, size - cfg.crop);
    return lo + static_cast<int>(rng.index(static_cast<std::size_t>(hi - lo + 1)));
  };
  p.offset_y = offset(sh);
  p.offset_x = offset(sw);
  return p;
}

Crop apply_augment(const ImageTensor& image, const LabelMap& labels, const AugmentParams& p, int crop) {
  require_shape(image.height == labels.height && image.width == labels.width, "augment: image/label size mismatch");
  const int sh = std::max(1, static_cast<int>(std::lround(image.height * p.scale)));
  const int sw = std::max(1, static_cast<int>(std::lround(image.width * p.scale)));
  const ImageTensor scaled = nn::resize_bilinear(image, sh, sw);
  const LabelMap scaled_labels =
      (sh == labels.height && sw == labels.width) ? labels : resize_labels_nearest(labels, sh, sw);
  Crop out{ImageTensor(image.channels, crop, crop), LabelMap(crop, crop, kIgnore)};
  for (int y = 0; y < crop; ++y) {
    const int sy = y + p.offset_y;
    if (sy < 0 || sy >= sh) continue;
    for (int x = 0; x < crop; ++x) {
      int sx = x + p.offset_x;
      if (sx < 0 || sx >= sw) continue;
      if (p.flip) sx = sw - 1 - sx;
      for (int c = 0; c < image.channels; ++c) out.image(c, y, x) = scaled(c, sy, sx);
      out.labels(y, x) = scaled_labels(sy, sx);
    }
  }
  return out;
}

Crop augment(const ImageTensor& image, const LabelMap& labels, const TrainConfig& cfg, Rng& rng) {
  return apply_augment(image, labels, draw_augment(image.height, image.width, cfg, rng), cfg.crop);
}

// ---------------------------------------------------------------------------
// Loss composition

double compose_source_loss(const LossTerms& t, const TrainConfig& cfg) {
  return t.seg_source + cfg.beta * t.emb + cfg.eta * t.cls_source;
}

double compose_drsl_loss(const LossTerms& t, const TrainConfig& cfg) {
  return (t.seg_source + t.seg_target) + cfg.beta * t.ma + cfg.eta * (t.cls_source + t.cls_target);
}

double compose_drsl_plus_loss(const LossTerms& t, const TrainConfig& cfg) {
  return compose_drsl_loss(t, cfg) + cfg.gamma * t.mcl;
}

namespace {

mmdl::ModeBank bank_of(const SegNet& net) {
  const auto& mc = net.config();
  return mmdl::ModeBank(mc.num_classes, mc.modes, mc.sigma2, net.mode_centers());
}

}  // namespace

LossTerms loss_src(SegNet& net, std::span<const Crop> batch, const TrainConfig& cfg, Rng& sample_rng,
                   bool accumulate) {
  require_shape(!batch.empty(), "loss_src: empty batch");
  const int ratio = net.config().label_ratio;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  LossTerms t;
  std::vector<ForwardPass> passes;
  std::vector<Tensor> dlogits;
  mmdl::SampleSet samples;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    passes.push_back(net.forward(batch[i].image, cfg.use_mmdl));
    SegLoss seg = loss_seg_source(passes.back().probs, batch[i].labels);
    t.seg_source += seg.value * inv_b;
    for (double& g : seg.grad_logits.data) g *= inv_b;
    dlogits.push_back(std::move(seg.grad_logits));
    if (cfg.use_mmdl) {
      const LabelMap reduced = mmdl::downscale_labels(batch[i].labels, ratio);
      samples.append(mmdl::sample_embeddings(passes.back().embeddings, reduced, cfg.samples_per_class, sample_rng,
                                             static_cast<int>(i), Domain::kSource));
    }
  }
  t.source_samples = samples.size();

  mmdl::LossGrad emb, cls;
  double emb_scale = 0.0;
  if (cfg.use_mmdl && !samples.empty()) {
    const mmdl::ModeBank bank = bank_of(net);
    emb = mmdl::loss_emb(samples, bank, cfg.alpha);
    cls = mmdl::loss_cls(samples, bank);
    emb_scale = 1.0 / static_cast<double>(samples.size());
    t.emb = emb.value * emb_scale;
    t.cls_source = cls.value;
  }
  t.total = compose_source_loss(t, cfg);
  if (!accumulate) return t;

  const bool embed_grad = cfg.use_mmdl && !samples.empty() && (cfg.beta != 0.0 || cfg.eta != 0.0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!embed_grad) {
      net.backward(passes[i], &dlogits[i], nullptr);
      continue;
    }
    const EmbeddingField& e = passes[i].embeddings;
    Tensor de(e.channels, e.height, e.width);
    mmdl::scatter_sample_grads(samples, emb.d_embeddings, cfg.beta * emb_scale, static_cast<int>(i), de);
    mmdl::scatter_sample_grads(samples, cls.d_embeddings, cfg.eta, static_cast<int>(i), de);
    net.backward(passes[i], &dlogits[i], &de);
  }
  if (embed_grad) net.add_mode_center_grad(cfg.beta * emb_scale * emb.d_centers + cfg.eta * cls.d_centers);
  return t;
}

LossTerms loss_adapt(SegNet& net, const Crop& source, const Crop& target, Variant variant, const TrainConfig& cfg,
                     Rng& sample_rng, Rng& triplet_rng, bool accumulate) {
  if (target.labels.size() != static_cast<std::size_t>(target.image.height) * target.image.width)
    throw ConfigError("adaptation step needs pseudo-labels for the target crop");
  const int ratio = net.config().label_ratio;
  const bool plus = variant == Variant::kDrslPlus;
  LossTerms t;
  const ForwardPass sp = net.forward(source.image, cfg.use_mmdl);
  const ForwardPass tp = net.forward(target.image, cfg.use_mmdl);
  const auto mask = mask_from_labels(target.labels);
  SegTotal seg = loss_seg_total(sp.probs, source.labels, tp.probs, target.labels, mask);
  t.seg_source = seg.source.value;
  t.seg_target = seg.target.value;

  mmdl::SampleSet src_samples, tgt_samples;
  mmdl::LossGrad cls_s, cls_t;
  alignment::MaLoss ma;
  alignment::MclLoss mcl;
  double mcl_scale = 0.0;
  if (cfg.use_mmdl) {
    src_samples = mmdl::sample_embeddings(sp.embeddings, mmdl::downscale_labels(source.labels, ratio),
                                          cfg.samples_per_class, sample_rng, 0, Domain::kSource);
    tgt_samples = mmdl::sample_embeddings(tp.embeddings, mmdl::downscale_labels(target.labels, ratio),
                                          cfg.samples_per_class, sample_rng, 0, Domain::kTarget);
    const mmdl::ModeBank bank = bank_of(net);
    ma = alignment::loss_ma(src_samples, tgt_samples, bank, cfg.alpha);
    cls_s = mmdl::loss_cls(src_samples, bank);
    cls_t = mmdl::loss_cls(tgt_samples, bank);
    t.ma = ma.value;
    t.cls_source = cls_s.value;
    t.cls_target = cls_t.value;
    if (plus) {
      const auto batch =
          alignment::build_mcl_triplets(tgt_samples, src_samples, bank, cfg.anchors_per_batch, triplet_rng, cfg.alpha1);
      mcl = alignment::loss_mcl(batch, tgt_samples.size(), src_samples.size(), bank.dim());
      t.triplets = batch.size();
      // Same treatment as the source embedding loss: the per-step objective uses the mean over triplets.
      if (!batch.empty()) mcl_scale = 1.0 / static_cast<double>(batch.size());
      t.mcl = mcl.value * mcl_scale;
    }
  }
  t.source_samples = src_samples.size();
  t.target_samples = tgt_samples.size();
  t.total = plus ? compose_drsl_plus_loss(t, cfg) : compose_drsl_loss(t, cfg);
  if (!accumulate) return t;

  const double gamma = plus ? cfg.gamma : 0.0;
  const bool embed_grad = cfg.use_mmdl && (cfg.beta != 0.0 || cfg.eta != 0.0 || gamma != 0.0);
  if (!embed_grad) {
    net.backward(sp, &seg.source.grad_logits, nullptr);
    net.backward(tp, &seg.target.grad_logits, nullptr);
    return t;
  }
  Tensor ds(sp.embeddings.channels, sp.embeddings.height, sp.embeddings.width);
  Tensor dt(tp.embeddings.channels, tp.embeddings.height, tp.embeddings.width);
  mmdl::scatter_sample_grads(src_samples, ma.d_source, cfg.beta, 0, ds);
  mmdl::scatter_sample_grads(src_samples, cls_s.d_embeddings, cfg.eta, 0, ds);
  mmdl::scatter_sample_grads(tgt_samples, ma.d_target, cfg.beta, 0, dt);
  mmdl::scatter_sample_grads(tgt_samples, cls_t.d_embeddings, cfg.eta, 0, dt);
  if (plus && t.triplets > 0) {
    mmdl::scatter_sample_grads(src_samples, mcl.d_source, gamma * mcl_scale, 0, ds);
    mmdl::scatter_sample_grads(tgt_samples, mcl.d_target, gamma * mcl_scale, 0, dt);
  }
  net.backward(sp, &seg.source.grad_logits, &ds);
  net.backward(tp, &seg.target.grad_logits, &dt);
  net.add_mode_center_grad(cfg.beta * ma.d_centers + cfg.eta * (cls_s.d_centers + cls_t.d_centers));
  return t;
}

LossTerms loss_drsl(SegNet& net, const Crop& source, const Crop& target, const TrainConfig& cfg, Rng& sample_rng,
                    Rng& triplet_rng, bool accumulate) {
  return loss_adapt(net, source, target, Variant::kDrsl, cfg, sample_rng, triplet_rng, accumulate);
}

LossTerms loss_drsl_plus(SegNet& net, const Crop& source, const Crop& target, const TrainConfig& cfg,
                         Rng& sample_rng, Rng& triplet_rng, bool accumulate) {
  return loss_adapt(net, source, target, Variant::kDrslPlus, cfg, sample_rng, triplet_rng, accumulate);
}

// ---------------------------------------------------------------------------
// Optimization

Sgd::Sgd(const nn::ParamStore& params, double momentum, double weight_decay)
    : momentum_(momentum), weight_decay_(weight_decay) {
  for (const auto& p : params) velocity_.emplace_back(p.numel(), 0.0);
}

void Sgd::step(nn::ParamStore& params, double lr) {
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    auto& v = velocity_[k];
    for (std::size_t i = 0; i < p.numel(); ++i) {
      v[i] = momentum_ * v[i] + (p.grad[i] + weight_decay_ * p.value[i]);
      p.value[i] -= lr * v[i];
    }
  }
}

double poly_lr(double base, int step, int total_steps, double power) {
  if (total_steps <= 0) return base;
  const double frac = 1.0 - static_cast<double>(step) / static_cast<double>(total_steps);
  return base * std::pow(std::max(frac, 0.0), power);
}

std::string metrics_csv(std::span<const MetricRow> rows) {
  std::string out =
      "phase,round,step,lr,seg_source,seg_target,emb,ma,cls_source,cls_target,mcl,total,"
      "source_samples,target_samples,triplets\n";
  for (const auto& r : rows) {
    const auto& t = r.terms;
    out += fmt::format("{},{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{},{},{}\n",
                       r.phase, r.round, r.step, r.lr, t.seg_source, t.seg_target, t.emb, t.ma, t.cls_source,
                       t.cls_target, t.mcl, t.total, t.source_samples, t.target_samples, t.triplets);
  }
  return out;
}

void write_metrics_csv(std::span<const MetricRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << metrics_csv(rows);
}

namespace {

void check_finite(const LossTerms& t, const char* phase, int step) {
  if (!std::isfinite(t.total))
    throw DivergenceError(fmt::format("{} loss diverged at step {} (seg_s={} seg_t={} ma={} cls_s={} cls_t={} mcl={})",
                                      phase, step, t.seg_source, t.seg_target, t.ma, t.cls_source, t.cls_target,
                                      t.mcl));
}

// Stream tags; every consumer draws from its own stream.
enum StreamTag : std::uint64_t {
  kSourcePhase = 1,
  kAdaptPhase = 2,
  kData = 10,
  kSamples = 11,
  kTriplets = 12,
};

}  // namespace

SourceTrainResult train_source(const TrainConfig& cfg, const TrainingData& data) {
  cfg.validate();
  if (data.source_images.empty()) throw ConfigError("train_source: no source images");
  SourceTrainResult r{SegNet(cfg.model_config(data.num_classes)), {}};
  Sgd sgd(r.net.params(), cfg.momentum, cfg.weight_decay);
  const Rng phase = Rng(cfg.seed).split(kSourcePhase);
  Rng data_rng = phase.split(kData), sample_rng = phase.split(kSamples);
  std::vector<Crop> batch(cfg.source_batch);
  for (int step = 0; step < cfg.source_steps; ++step) {
    const double lr = poly_lr(cfg.lr_source, step, cfg.source_steps, cfg.lr_power);
    for (auto& c : batch) {
      const std::size_t i = data_rng.index(data.source_images.size());
      c = augment(data.source_images[i], data.source_labels[i], cfg, data_rng);
    }
    r.net.params().zero_grad();
    const LossTerms t = loss_src(r.net, batch, cfg, sample_rng, true);
    check_finite(t, "source", step);
    sgd.step(r.net.params(), lr);
    r.metrics.push_back({"source", -1, step, lr, t});
  }
  return r;
}

std::vector<ProbTensor> predict_probs(const SegNet& net, std::span<const ImageTensor> images) {
  std::vector<ProbTensor> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(net.forward(img, false).probs);
  return out;
}

nlohmann::json to_json(const RoundReport& r) {
  nlohmann::json thresholds = nlohmann::json::array();
  for (double t : r.thresholds) {
    if (std::isinf(t))
      thresholds.push_back(nullptr);
    else
      thresholds.push_back(t);
  }
  nlohmann::json j = {{"round", r.round},
                      {"delta", r.delta},
                      {"thresholds", thresholds},
                      {"coverage", r.coverage},
                      {"self_entropy", r.self_entropy}};
  j["pl_miou"] = r.pl_miou ? nlohmann::json(*r.pl_miou) : nlohmann::json(nullptr);
  j["target_miou"] = r.target_miou ? nlohmann::json(*r.target_miou) : nlohmann::json(nullptr);
  return j;
}

AdaptResult adapt(const TrainConfig& cfg, const SegNet& source_net, const TrainingData& data,
                  const AdaptHooks& hooks, const PseudoLabelSet* initial) {
  cfg.validate();
  if (data.target_images.empty()) throw ConfigError("adapt: no target images");
  if (data.source_images.empty()) throw ConfigError("adapt: no source images");
  AdaptResult r{source_net, {}, {}};
  if (cfg.rounds == 0) return r;
  Sgd sgd(r.net.params(), cfg.momentum, cfg.weight_decay);
  const int total_steps = cfg.rounds * cfg.steps_per_round;
  int global_step = 0;
  for (int round = 0; round < cfg.rounds; ++round) {
    const std::vector<ProbTensor> probs = predict_probs(r.net, data.target_images);
    PseudoLabelSet pl;
    if (round == 0 && initial) {
      pl = *initial;
      pl.validate();
      if (pl.labels.size() != data.target_images.size())
        throw ConfigError("provided pseudo-labels do not match the target split");
    } else {
      pl = generate_pseudo_labels(probs, delta_schedule(round), round);
    }
    RoundReport rep;
    rep.round = round;
    rep.delta = pl.delta;
    rep.thresholds = pl.thresholds;
    rep.coverage = pl.coverage();
    rep.self_entropy = normalized_self_entropy(probs);
    if (hooks.pseudo_label_miou) rep.pl_miou = hooks.pseudo_label_miou(pl);
    if (hooks.on_pseudo_labels) hooks.on_pseudo_labels(pl);

    const Rng phase = Rng(cfg.seed).split(kAdaptPhase).split(static_cast<std::uint64_t>(round));
    Rng data_rng = phase.split(kData), sample_rng = phase.split(kSamples), triplet_rng = phase.split(kTriplets);
    for (int step = 0; step < cfg.steps_per_round; ++step, ++global_step) {
      const double lr = poly_lr(cfg.lr_adapt, global_step, total_steps, cfg.lr_power);
      const std::size_t si = data_rng.index(data.source_images.size());
      const Crop src = augment(data.source_images[si], data.source_labels[si], cfg, data_rng);
      const std::size_t ti = data_rng.index(data.target_images.size());
      const Crop tgt = augment(data.target_images[ti], pl.labels[ti], cfg, data_rng);
      r.net.params().zero_grad();
      const LossTerms t = loss_adapt(r.net, src, tgt, cfg.variant, cfg, sample_rng, triplet_rng, true);
      check_finite(t, "adapt", global_step);
      sgd.step(r.net.params(), lr);
      r.metrics.push_back({"adapt", round, global_step, lr, t});
    }
    if (hooks.target_miou) rep.target_miou = hooks.target_miou(r.net);
    if (hooks.on_round_end) hooks.on_round_end(round, r.net);
    r.reports.push_back(std::move(rep));
  }
  return r;
}

}  // namespace drsl
