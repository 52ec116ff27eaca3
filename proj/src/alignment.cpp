#include "drsl/alignment.hpp"

namespace drsl::alignment {

int assign_mode(const Eigen::VectorXd& e, const mmdl::ModeBank& bank, int cls) {
  require_shape(cls >= 0 && cls < bank.num_classes, "assign_mode: class out of range");
  require_shape(e.size() == bank.dim(), "assign_mode: dimension mismatch");
  int best = 0;
  double best_d = (bank.centers.row(bank.row(cls, 0)).transpose() - e).squaredNorm();
  for (int m = 1; m < bank.modes; ++m) {
    const double d = (bank.centers.row(bank.row(cls, m)).transpose() - e).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = m;
    }
  }
  return best;
}

TripletBatch build_mcl_triplets(const mmdl::SampleSet& target, const mmdl::SampleSet& source,
                                const mmdl::ModeBank& bank, int max_anchors, Rng& rng, double alpha1) {
  TripletBatch batch;
  batch.alpha1 = alpha1;
  if (target.empty() || source.empty() || max_anchors <= 0) return batch;

  // Source samples bucketed by (class, mode), plus per-class lists for negatives.
  const int k = bank.num_classes, m = bank.modes;
  std::vector<std::vector<std::size_t>> by_mode(static_cast<std::size_t>(k) * m);
  std::vector<std::vector<std::size_t>> by_class(k);
  for (std::size_t i = 0; i < source.size(); ++i) {
    const auto& s = source.samples[i];
    by_mode[static_cast<std::size_t>(s.label) * m + assign_mode(s.embedding, bank, s.label)].push_back(i);
    by_class[s.label].push_back(i);
  }
  int source_classes = 0;
  for (const auto& c : by_class) source_classes += !c.empty();
  if (source_classes < 2) return batch;

  std::vector<std::size_t> anchors;
  for (std::size_t i = 0; i < target.size(); ++i)
    if (target.samples[i].label != kIgnore) anchors.push_back(i);
  const std::size_t take = std::min<std::size_t>(anchors.size(), max_anchors);
  rng.partial_shuffle(anchors, take);

  for (std::size_t a = 0; a < take; ++a) {
    const auto& anchor = target.samples[anchors[a]];
    const int mode = assign_mode(anchor.embedding, bank, anchor.label);
    const auto& positives = by_mode[static_cast<std::size_t>(anchor.label) * m + mode];
    if (positives.empty()) continue;
    const std::size_t pos = positives[rng.index(positives.size())];
    const std::size_t negatives = source.size() - by_class[anchor.label].size();
    if (negatives == 0) continue;
    // The r-th source sample whose class differs from the anchor's.
    std::size_t r = rng.index(negatives), neg = 0;
    for (std::size_t i = 0; i < source.size(); ++i) {
      if (source.samples[i].label == anchor.label) continue;
      if (r-- == 0) {
        neg = i;
        break;
      }
    }
    Triplet t;
    t.anchor = anchor.embedding;
    t.positive = source.samples[pos].embedding;
    t.negative = source.samples[neg].embedding;
    t.cls = anchor.label;
    t.mode = mode;
    t.anchor_index = anchors[a];
    t.positive_index = pos;
    t.negative_index = neg;
    batch.triplets.push_back(std::move(t));
  }
  return batch;
}

MclLoss loss_mcl(const TripletBatch& batch, std::size_t n_target, std::size_t n_source, int dim) {
  MclLoss out;
  out.d_target = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_target), dim);
  out.d_source = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_source), dim);
  for (const auto& t : batch.triplets) {
    const Eigen::VectorXd ap = t.anchor - t.positive;
    const Eigen::VectorXd an = t.anchor - t.negative;
    const double hinge = ap.squaredNorm() - an.squaredNorm() + batch.alpha1;
    if (hinge <= 0) continue;
    out.value += hinge;
    out.d_target.row(t.anchor_index) += 2.0 * (ap - an).transpose();
    out.d_source.row(t.positive_index) -= 2.0 * ap.transpose();
    out.d_source.row(t.negative_index) += 2.0 * an.transpose();
  }
  return out;
}

MaLoss loss_ma(const mmdl::SampleSet& source, const mmdl::SampleSet& target, const mmdl::ModeBank& bank,
               double alpha) {
  MaLoss out;
  out.d_centers = Eigen::MatrixXd::Zero(bank.centers.rows(), bank.centers.cols());
  out.d_source = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(source.size()), bank.dim());
  out.d_target = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(target.size()), bank.dim());
  if (!source.empty()) {
    const double inv = 1.0 / static_cast<double>(source.size());
    mmdl::LossGrad g = mmdl::loss_emb(source, bank, alpha);
    out.source_term = g.value * inv;
    out.d_source = g.d_embeddings * inv;
    out.d_centers += g.d_centers * inv;
  }
  if (!target.empty()) {
    const double inv = 1.0 / static_cast<double>(target.size());
    mmdl::LossGrad g = mmdl::loss_emb(target, bank, alpha);
    out.target_term = g.value * inv;
    out.d_target = g.d_embeddings * inv;
    out.d_centers += g.d_centers * inv;
  }
  out.value = out.source_term + out.target_term;
  return out;
}

}  // namespace drsl::alignment
