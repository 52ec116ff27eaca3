#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "drsl/nn.hpp"
#include "drsl/tensor.hpp"

namespace drsl {

struct ModelConfig {
  int num_classes = 5;
  int encoder_width = 64;  // d
  int embed_dim = 16;      // d_hat, must be < d
  int modes = 3;           // M
  double sigma2 = 0.5;
  int label_ratio = 2;     // embeddings live at H/label_ratio
  std::array<int, 4> head_rates{1, 2, 4, 8};
  std::array<int, 4> embed_rates{1, 2, 4, 8};
  std::uint64_t init_seed = 0;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

inline constexpr int kEncoderStride = 4;
inline constexpr int kEncoderLayers = 4;
inline constexpr int kHeadBranches = 4;

/// Everything backward() needs from one forward pass over one image.
struct ForwardPass {
  int height = 0, width = 0;
  std::array<nn::ConvCache, kEncoderLayers> encoder_cache;
  std::array<Tensor, kEncoderLayers> encoder_out;  // post-ReLU
  std::array<nn::ConvCache, kHeadBranches> seg_cache;
  std::array<nn::ConvCache, kHeadBranches> embed_cache;
  Tensor logits;  // full resolution, pre-softmax
  ProbTensor probs;
  bool has_embeddings = false;
  EmbeddingField embeddings;

  [[nodiscard]] const BaseFeatures& features() const { return encoder_out.back(); }
};

/// Encoder (4 convs, stride 4) + dilated segmentation head + MMDL-FR
/// embedding block and mode bank, all in one parameter registry.
class SegNet {
 public:
  explicit SegNet(const ModelConfig& config);

  [[nodiscard]] const ModelConfig& config() const { return config_; }
  nn::ParamStore& params() { return params_; }
  [[nodiscard]] const nn::ParamStore& params() const { return params_; }

  [[nodiscard]] BaseFeatures encode(const ImageTensor& image) const;
  [[nodiscard]] ProbTensor segment(const BaseFeatures& features, int out_h, int out_w) const;
  [[nodiscard]] EmbeddingField embed(const BaseFeatures& features, int image_h, int image_w) const;

  [[nodiscard]] ForwardPass forward(const ImageTensor& image, bool with_embeddings) const;
  /// Accumulates parameter gradients. Either gradient may be null.
  void backward(const ForwardPass& pass, const Tensor* grad_logits, const Tensor* grad_embeddings);

  /// Mode centers as a (K*M) x d_hat matrix.
  [[nodiscard]] Eigen::MatrixXd mode_centers() const;
  void add_mode_center_grad(const Eigen::MatrixXd& grad);
  [[nodiscard]] std::size_t mode_centers_index() const { return centers_; }

  [[nodiscard]] const std::array<nn::Conv2d, kEncoderLayers>& encoder_layers() const { return encoder_; }

 private:
  [[nodiscard]] Tensor run_encoder(const ImageTensor& image,
                                   std::array<nn::ConvCache, kEncoderLayers>* caches,
                                   std::array<Tensor, kEncoderLayers>* outs) const;
  [[nodiscard]] Tensor run_branches(const std::array<nn::Conv2d, kHeadBranches>& branches,
                                    const BaseFeatures& f,
                                    std::array<nn::ConvCache, kHeadBranches>* caches) const;

  ModelConfig config_;
  nn::ParamStore params_;
  std::array<nn::Conv2d, kEncoderLayers> encoder_;
  std::array<nn::Conv2d, kHeadBranches> seg_head_;
  std::array<nn::Conv2d, kHeadBranches> embed_head_;
  std::size_t centers_ = 0;
};

/// Argmax class per pixel.
LabelMap predict(const SegNet& net, const ImageTensor& image);
LabelMap argmax_labels(const ProbTensor& probs);

struct SegLoss {
  double value = 0.0;
  Tensor grad_logits;          // dL/dlogits for the softmax that produced probs
  std::size_t pixels = 0;      // contributing pixels
  bool all_ignored = false;    // warning flag: nothing contributed
};

/// Mean over non-ignore pixels of -log p(true class).
SegLoss loss_seg_source(const ProbTensor& probs, const LabelMap& labels);

/// Mean of -log p(pseudo label) over pixels with mask = 1. The mask must
/// agree with labels != ignore.
SegLoss loss_seg_target(const ProbTensor& probs, const LabelMap& pseudo_labels,
                        std::span<const std::uint8_t> mask);

struct SegTotal {
  double total = 0.0;
  SegLoss source;
  SegLoss target;
};

SegTotal loss_seg_total(const ProbTensor& src_probs, const LabelMap& src_labels,
                        const ProbTensor& tgt_probs, const LabelMap& pseudo_labels,
                        std::span<const std::uint8_t> mask);

}  // namespace drsl
