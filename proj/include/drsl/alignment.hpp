#pragma once

#include <vector>

#include <Eigen/Dense>

#include "drsl/mmdl.hpp"
#include "drsl/rng.hpp"

namespace drsl::alignment {

/// (target anchor, same-class same-mode source positive, other-class source
/// negative). Indices point into the SampleSets the batch was built from.
struct Triplet {
  Eigen::VectorXd anchor;
  Eigen::VectorXd positive;
  Eigen::VectorXd negative;
  int cls = 0;
  int mode = 0;
  std::size_t anchor_index = 0;    // into the target set
  std::size_t positive_index = 0;  // into the source set
  std::size_t negative_index = 0;  // into the source set
};

struct TripletBatch {
  std::vector<Triplet> triplets;
  double alpha1 = 1.0;

  [[nodiscard]] bool empty() const { return triplets.empty(); }
  [[nodiscard]] std::size_t size() const { return triplets.size(); }
};

/// argmin_m dist2(c, m); ties go to the lowest mode index.
int assign_mode(const Eigen::VectorXd& e, const mmdl::ModeBank& bank, int cls);

/// Up to N_e anchors drawn without replacement from the pseudo-labeled
/// target samples. Anchors without a same-mode source positive are skipped.
TripletBatch build_mcl_triplets(const mmdl::SampleSet& target, const mmdl::SampleSet& source,
                                const mmdl::ModeBank& bank, int max_anchors, Rng& rng, double alpha1 = 1.0);

struct MclLoss {
  double value = 0.0;
  Eigen::MatrixXd d_target;  // rows follow the target SampleSet
  Eigen::MatrixXd d_source;  // rows follow the source SampleSet
};

/// Raw sum of relu(|a - p|^2 - |a - n|^2 + alpha1). `n_target`/`n_source`
/// size the scatter matrices; the loss never touches mode centers.
MclLoss loss_mcl(const TripletBatch& batch, std::size_t n_target, std::size_t n_source, int dim);

struct MaLoss {
  double value = 0.0;
  double source_term = 0.0;
  double target_term = 0.0;
  Eigen::MatrixXd d_source;
  Eigen::MatrixXd d_target;
  Eigen::MatrixXd d_centers;
};

/// (1/|E_s|) L_emb(E_s) + (1/|E_t|) L_emb(E_t); empty sets drop their term.
MaLoss loss_ma(const mmdl::SampleSet& source, const mmdl::SampleSet& target, const mmdl::ModeBank& bank,
               double alpha);

}  // namespace drsl::alignment
