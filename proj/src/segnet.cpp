#include "drsl/segnet.hpp"

#include <cmath>
#include <string>

namespace drsl {

void ModelConfig::validate() const {
  if (num_classes < 2 || num_classes > 254) throw ConfigError("num_classes must be in [2, 254]");
  if (encoder_width < 1 || embed_dim < 1) throw ConfigError("layer widths must be positive");
  if (embed_dim >= encoder_width) throw ConfigError("embed_dim must be smaller than encoder_width");
  if (modes < 1) throw ConfigError("modes must be >= 1");
  if (!(sigma2 > 0)) throw ConfigError("sigma2 must be > 0");
  if (label_ratio < 1) throw ConfigError("label_ratio must be >= 1");
  for (int r : head_rates)
    if (r < 1) throw ConfigError("dilation rates must be >= 1");
  for (int r : embed_rates)
    if (r < 1) throw ConfigError("dilation rates must be >= 1");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"num_classes", c.num_classes}, {"encoder_width", c.encoder_width},
                     {"embed_dim", c.embed_dim},     {"modes", c.modes},
                     {"sigma2", c.sigma2},           {"label_ratio", c.label_ratio},
                     {"head_rates", c.head_rates},   {"embed_rates", c.embed_rates},
                     {"init_seed", c.init_seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.num_classes = j.value("num_classes", d.num_classes);
  c.encoder_width = j.value("encoder_width", d.encoder_width);
  c.embed_dim = j.value("embed_dim", d.embed_dim);
  c.modes = j.value("modes", d.modes);
  c.sigma2 = j.value("sigma2", d.sigma2);
  c.label_ratio = j.value("label_ratio", d.label_ratio);
  c.head_rates = j.value("head_rates", d.head_rates);
  c.embed_rates = j.value("embed_rates", d.embed_rates);
  c.init_seed = j.value("init_seed", d.init_seed);
}

SegNet::SegNet(const ModelConfig& config) : config_(config) {
  config_.validate();
  const int d = config_.encoder_width;
  const std::array<nn::ConvSpec, kEncoderLayers> enc = {{
      {3, d, 3, 1, 1, 1},
      {d, d, 3, 2, 1, 1},
      {d, d, 3, 1, 1, 1},
      {d, d, 3, 2, 1, 1},
  }};
  for (int i = 0; i < kEncoderLayers; ++i)
    encoder_[i] = nn::Conv2d(params_, "encoder.conv" + std::to_string(i + 1), enc[i]);
  for (int i = 0; i < kHeadBranches; ++i) {
    const int r = config_.head_rates[i];
    seg_head_[i] = nn::Conv2d(params_, "seg_head.branch" + std::to_string(i + 1),
                              {d, config_.num_classes, 3, 1, r, r});
  }
  for (int i = 0; i < kHeadBranches; ++i) {
    const int r = config_.embed_rates[i];
    embed_head_[i] = nn::Conv2d(params_, "embed.branch" + std::to_string(i + 1),
                                {d, config_.embed_dim, 3, 1, r, r});
  }
  centers_ = params_.add("mmdl.mode_centers", {config_.num_classes * config_.modes, config_.embed_dim});

  Rng rng = Rng(config_.init_seed).split(0x1417);
  for (const auto& c : encoder_) c.init(params_, rng);
  for (const auto& c : seg_head_) c.init(params_, rng);
  for (const auto& c : embed_head_) c.init(params_, rng);
  const double std = 1.0 / std::sqrt(static_cast<double>(config_.embed_dim));
  for (double& v : params_[centers_].value) v = std * rng.normal();
}

Tensor SegNet::run_encoder(const ImageTensor& image, std::array<nn::ConvCache, kEncoderLayers>* caches,
                           std::array<Tensor, kEncoderLayers>* outs) const {
  require_shape(image.channels == 3, "encoder expects a 3-channel image");
  require_shape(image.height % kEncoderStride == 0 && image.width % kEncoderStride == 0,
                "image size must be divisible by the encoder stride");
  Tensor x = image;
  for (int i = 0; i < kEncoderLayers; ++i) {
    x = nn::relu(encoder_[i].forward(params_, x, caches ? &(*caches)[i] : nullptr));
    if (outs) (*outs)[i] = x;
  }
  return x;
}

Tensor SegNet::run_branches(const std::array<nn::Conv2d, kHeadBranches>& branches, const BaseFeatures& f,
                            std::array<nn::ConvCache, kHeadBranches>* caches) const {
  Tensor sum = branches[0].forward(params_, f, caches ? &(*caches)[0] : nullptr);
  for (int i = 1; i < kHeadBranches; ++i)
    sum += branches[i].forward(params_, f, caches ? &(*caches)[i] : nullptr);
  return sum;
}

BaseFeatures SegNet::encode(const ImageTensor& image) const { return run_encoder(image, nullptr, nullptr); }

ProbTensor SegNet::segment(const BaseFeatures& features, int out_h, int out_w) const {
  require_shape(features.channels == config_.encoder_width, "segment: feature width mismatch");
  return nn::softmax_channels(nn::resize_bilinear(run_branches(seg_head_, features, nullptr), out_h, out_w));
}

EmbeddingField SegNet::embed(const BaseFeatures& features, int image_h, int image_w) const {
  require_shape(features.channels == config_.encoder_width, "embed: feature width mismatch");
  require_shape(image_h % config_.label_ratio == 0 && image_w % config_.label_ratio == 0,
                "image size must be divisible by the label reduction ratio");
  return nn::resize_bilinear(run_branches(embed_head_, features, nullptr), image_h / config_.label_ratio,
                             image_w / config_.label_ratio);
}

ForwardPass SegNet::forward(const ImageTensor& image, bool with_embeddings) const {
  ForwardPass p;
  p.height = image.height;
  p.width = image.width;
  const Tensor& f = run_encoder(image, &p.encoder_cache, &p.encoder_out);
  p.logits = nn::resize_bilinear(run_branches(seg_head_, f, &p.seg_cache), image.height, image.width);
  p.probs = nn::softmax_channels(p.logits);
  if (with_embeddings) {
    require_shape(image.height % config_.label_ratio == 0 && image.width % config_.label_ratio == 0,
                  "image size must be divisible by the label reduction ratio");
    p.has_embeddings = true;
    p.embeddings = nn::resize_bilinear(run_branches(embed_head_, f, &p.embed_cache),
                                       image.height / config_.label_ratio, image.width / config_.label_ratio);
  }
  return p;
}

void SegNet::backward(const ForwardPass& pass, const Tensor* grad_logits, const Tensor* grad_embeddings) {
  const BaseFeatures& f = pass.features();
  Tensor df(f.channels, f.height, f.width);
  bool any = false;
  if (grad_logits) {
    const Tensor dlow = nn::resize_bilinear_backward(*grad_logits, f.height, f.width);
    for (int i = 0; i < kHeadBranches; ++i) df += seg_head_[i].backward(params_, pass.seg_cache[i], dlow);
    any = true;
  }
  if (grad_embeddings) {
    require_shape(pass.has_embeddings, "backward: forward pass ran without embeddings");
    const Tensor dlow = nn::resize_bilinear_backward(*grad_embeddings, f.height, f.width);
    for (int i = 0; i < kHeadBranches; ++i) df += embed_head_[i].backward(params_, pass.embed_cache[i], dlow);
    any = true;
  }
  if (!any) return;
  Tensor g = std::move(df);
  for (int i = kEncoderLayers - 1; i >= 0; --i) {
    g = nn::relu_backward(pass.encoder_out[i], g);
    g = encoder_[i].backward(params_, pass.encoder_cache[i], g, /*need_input_grad=*/i > 0);
  }
}

Eigen::MatrixXd SegNet::mode_centers() const {
  const auto& p = params_[centers_];
  return Eigen::Map<const nn::RowMatrix>(p.value.data(), p.shape[0], p.shape[1]);
}

void SegNet::add_mode_center_grad(const Eigen::MatrixXd& grad) {
  auto& p = params_[centers_];
  require_shape(grad.rows() == p.shape[0] && grad.cols() == p.shape[1], "mode center grad shape");
  Eigen::Map<nn::RowMatrix>(p.grad.data(), p.shape[0], p.shape[1]) += grad;
}

LabelMap argmax_labels(const ProbTensor& probs) {
  LabelMap out(probs.height, probs.width, 0);
  const std::size_t n = probs.plane_size();
  for (std::size_t i = 0; i < n; ++i) {
    int best = 0;
    for (int c = 1; c < probs.channels; ++c)
      if (probs.data[c * n + i] > probs.data[best * n + i]) best = c;
    out.labels[i] = static_cast<std::uint8_t>(best);
  }
  return out;
}

LabelMap predict(const SegNet& net, const ImageTensor& image) {
  return argmax_labels(net.forward(image, false).probs);
}

namespace {

SegLoss masked_ce(const ProbTensor& probs, const LabelMap& labels, std::span<const std::uint8_t> mask) {
  require_shape(probs.height == labels.height && probs.width == labels.width, "loss: label/prob size mismatch");
  const std::size_t n = probs.plane_size();
  SegLoss out;
  out.grad_logits = Tensor(probs.channels, probs.height, probs.width);
  double sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    const int y = labels.labels[i];
    require_shape(y < probs.channels, "loss: label out of range");
    sum -= std::log(std::max(probs.data[y * n + i], 1e-300));
    ++out.pixels;
  }
  if (out.pixels == 0) {
    out.all_ignored = true;
    return out;
  }
  const double inv = 1.0 / static_cast<double>(out.pixels);
  out.value = sum * inv;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    for (int c = 0; c < probs.channels; ++c) out.grad_logits.data[c * n + i] = probs.data[c * n + i] * inv;
    out.grad_logits.data[labels.labels[i] * n + i] -= inv;
  }
  return out;
}

}  // namespace

SegLoss loss_seg_source(const ProbTensor& probs, const LabelMap& labels) {
  return masked_ce(probs, labels, mask_from_labels(labels));
}

SegLoss loss_seg_target(const ProbTensor& probs, const LabelMap& pseudo_labels,
                        std::span<const std::uint8_t> mask) {
  require_shape(mask.size() == pseudo_labels.size(), "loss: mask size mismatch");
  for (std::size_t i = 0; i < mask.size(); ++i)
    if ((mask[i] != 0) != (pseudo_labels.labels[i] != kIgnore))
      throw ShapeError("pseudo-label mask disagrees with labels");
  SegLoss out = masked_ce(probs, pseudo_labels, mask);
  out.all_ignored = false;  // an empty selection is a normal state for targets
  return out;
}

SegTotal loss_seg_total(const ProbTensor& src_probs, const LabelMap& src_labels, const ProbTensor& tgt_probs,
                        const LabelMap& pseudo_labels, std::span<const std::uint8_t> mask) {
  SegTotal t;
  t.source = loss_seg_source(src_probs, src_labels);
  t.target = loss_seg_target(tgt_probs, pseudo_labels, mask);
  t.total = t.source.value + t.target.value;
  return t;
}

}  // namespace drsl
