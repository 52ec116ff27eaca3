#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "drsl/common.hpp"
#include "drsl/rng.hpp"
#include "drsl/tensor.hpp"

namespace drsl::mmdl {

/// K classes x M modes of d_hat-dim centers, row (c*M + m), shared variance.
struct ModeBank {
  int num_classes = 0;
  int modes = 0;
  double sigma2 = 0.5;
  Eigen::MatrixXd centers;  // (K*M) x d_hat

  ModeBank() = default;
  ModeBank(int k, int m, double s2, Eigen::MatrixXd c);

  [[nodiscard]] int dim() const { return static_cast<int>(centers.cols()); }
  [[nodiscard]] Eigen::Index row(int c, int m) const { return static_cast<Eigen::Index>(c) * modes + m; }
};

struct Sample {
  Eigen::VectorXd embedding;
  int label = 0;
  int image_id = 0;
  int row = 0;
  int col = 0;
};

struct SampleSet {
  Domain domain = Domain::kSource;
  std::vector<Sample> samples;

  [[nodiscard]] std::size_t size() const { return samples.size(); }
  [[nodiscard]] bool empty() const { return samples.empty(); }
  void append(const SampleSet& other);
};

/// Nearest-neighbour label subsampling anchored at the top-left pixel.
LabelMap downscale_labels(const LabelMap& labels, int ratio);

/// K x M matrix of squared Euclidean distances.
Eigen::MatrixXd mode_dist2(const Eigen::VectorXd& e, const ModeBank& bank);

/// q(c,m) ∝ exp(-dist2 / (2 sigma2)), normalized over all K*M entries.
Eigen::MatrixXd mode_posteriors(const Eigen::MatrixXd& dist2, double sigma2);

/// Q(c) = max_m q(c,m).
Eigen::VectorXd class_posterior(const Eigen::MatrixXd& q);

/// Per present class, min(T_e, count) positions drawn uniformly without
/// replacement. Ignore pixels never participate.
SampleSet sample_embeddings(const EmbeddingField& field, const LabelMap& labels, int max_per_class, Rng& rng,
                            int image_id = 0, Domain domain = Domain::kSource);

/// A loss value with gradients for each sample embedding and every center.
struct LossGrad {
  double value = 0.0;
  Eigen::MatrixXd d_embeddings;  // n x d_hat
  Eigen::MatrixXd d_centers;     // (K*M) x d_hat
};

/// Sum over samples of relu(min_m D(c*,m) - min_{c!=c*,m} D(c,m) + alpha).
/// Unnormalized; callers divide.
LossGrad loss_emb(const SampleSet& samples, const ModeBank& bank, double alpha);

/// Mean over samples of -log Q(true class).
LossGrad loss_cls(const SampleSet& samples, const ModeBank& bank);

/// Adds sample gradients (rows of `grad`, scaled) into the embedding-field
/// gradient of image `image_id`.
void scatter_sample_grads(const SampleSet& samples, const Eigen::MatrixXd& grad, double scale, int image_id,
                          EmbeddingField& field_grad);

}  // namespace drsl::mmdl
