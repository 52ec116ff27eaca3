#include "drsl/mmdl.hpp"

#include <cmath>
#include <limits>

namespace drsl::mmdl {

ModeBank::ModeBank(int k, int m, double s2, Eigen::MatrixXd c)
    : num_classes(k), modes(m), sigma2(s2), centers(std::move(c)) {
  if (k < 1 || m < 1) throw ConfigError("mode bank needs K >= 1 and M >= 1");
  if (!(s2 > 0)) throw ConfigError("mode bank sigma2 must be > 0");
  if (centers.rows() != static_cast<Eigen::Index>(k) * m) throw ShapeError("mode bank has wrong row count");
  if (!centers.allFinite()) throw ConfigError("mode bank centers must be finite");
}

void SampleSet::append(const SampleSet& other) {
  samples.insert(samples.end(), other.samples.begin(), other.samples.end());
}

LabelMap downscale_labels(const LabelMap& labels, int ratio) {
  if (ratio < 1) throw ConfigError("label ratio must be >= 1");
  require_shape(labels.height % ratio == 0 && labels.width % ratio == 0,
                "label map size not divisible by reduction ratio");
  if (ratio == 1) return labels;
  LabelMap out(labels.height / ratio, labels.width / ratio);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) out(y, x) = labels(y * ratio, x * ratio);
  return out;
}

Eigen::MatrixXd mode_dist2(const Eigen::VectorXd& e, const ModeBank& bank) {
  require_shape(e.size() == bank.dim(), "embedding/center dimension mismatch");
  Eigen::MatrixXd d(bank.num_classes, bank.modes);
  for (int c = 0; c < bank.num_classes; ++c)
    for (int m = 0; m < bank.modes; ++m) d(c, m) = (bank.centers.row(bank.row(c, m)).transpose() - e).squaredNorm();
  return d;
}

Eigen::MatrixXd mode_posteriors(const Eigen::MatrixXd& dist2, double sigma2) {
  const Eigen::MatrixXd s = -dist2 / (2.0 * sigma2);
  Eigen::MatrixXd q = (s.array() - s.maxCoeff()).exp().matrix();
  q /= q.sum();
  return q;
}

Eigen::VectorXd class_posterior(const Eigen::MatrixXd& q) { return q.rowwise().maxCoeff(); }

SampleSet sample_embeddings(const EmbeddingField& field, const LabelMap& labels, int max_per_class, Rng& rng,
                            int image_id, Domain domain) {
  require_shape(field.height == labels.height && field.width == labels.width,
                "embedding field and label map sizes differ");
  SampleSet out;
  out.domain = domain;
  if (max_per_class <= 0) return out;
  std::vector<std::vector<int>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels.labels[i];
    if (y == kIgnore) continue;
    if (static_cast<std::size_t>(y) >= by_class.size()) by_class.resize(y + 1);
    by_class[y].push_back(static_cast<int>(i));
  }
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& pos = by_class[c];
    if (pos.empty()) continue;
    const std::size_t take = std::min<std::size_t>(pos.size(), max_per_class);
    rng.partial_shuffle(pos, take);
    for (std::size_t k = 0; k < take; ++k) {
      Sample s;
      s.label = static_cast<int>(c);
      s.image_id = image_id;
      s.row = pos[k] / labels.width;
      s.col = pos[k] % labels.width;
      s.embedding.resize(field.channels);
      for (int d = 0; d < field.channels; ++d) s.embedding[d] = field(d, s.row, s.col);
      out.samples.push_back(std::move(s));
    }
  }
  return out;
}

namespace {

// Argmin over the modes of class c; ties go to the lowest index.
int nearest_mode(const Eigen::MatrixXd& dist2, int c) {
  int best = 0;
  for (int m = 1; m < dist2.cols(); ++m)
    if (dist2(c, m) < dist2(c, best)) best = m;
  return best;
}

}  // namespace

LossGrad loss_emb(const SampleSet& samples, const ModeBank& bank, double alpha) {
  LossGrad out;
  out.d_embeddings = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(samples.size()), bank.dim());
  out.d_centers = Eigen::MatrixXd::Zero(bank.centers.rows(), bank.centers.cols());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples.samples[i];
    require_shape(s.label >= 0 && s.label < bank.num_classes, "sample label outside mode bank");
    const Eigen::MatrixXd d = mode_dist2(s.embedding, bank);
    const int pos_mode = nearest_mode(d, s.label);
    int neg_c = -1, neg_m = -1;
    double neg = std::numeric_limits<double>::infinity();
    for (int c = 0; c < bank.num_classes; ++c) {
      if (c == s.label) continue;
      for (int m = 0; m < bank.modes; ++m)
        if (d(c, m) < neg) {
          neg = d(c, m);
          neg_c = c;
          neg_m = m;
        }
    }
    if (neg_c < 0) continue;  // single-class bank: no negative exists
    const double hinge = d(s.label, pos_mode) - neg + alpha;
    if (hinge <= 0) continue;
    out.value += hinge;
    const Eigen::VectorXd to_pos = s.embedding - bank.centers.row(bank.row(s.label, pos_mode)).transpose();
    const Eigen::VectorXd to_neg = s.embedding - bank.centers.row(bank.row(neg_c, neg_m)).transpose();
    out.d_embeddings.row(i) = 2.0 * (to_pos - to_neg).transpose();
    out.d_centers.row(bank.row(s.label, pos_mode)) -= 2.0 * to_pos.transpose();
    out.d_centers.row(bank.row(neg_c, neg_m)) += 2.0 * to_neg.transpose();
  }
  return out;
}

LossGrad loss_cls(const SampleSet& samples, const ModeBank& bank) {
  LossGrad out;
  out.d_embeddings = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(samples.size()), bank.dim());
  out.d_centers = Eigen::MatrixXd::Zero(bank.centers.rows(), bank.centers.cols());
  if (samples.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(samples.size());
  const double k = 1.0 / (2.0 * bank.sigma2);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples.samples[i];
    require_shape(s.label >= 0 && s.label < bank.num_classes, "sample label outside mode bank");
    const Eigen::MatrixXd d = mode_dist2(s.embedding, bank);
    const Eigen::MatrixXd q = mode_posteriors(d, bank.sigma2);
    // Q(c*) = max_m q(c*,m) is attained at the nearest mode of c*.
    const int best = nearest_mode(d, s.label);
    out.value -= std::log(std::max(q(s.label, best), 1e-300)) * inv_n;
    // -log q(c*,b) = k*D(c*,b) + logsumexp(-k*D); dL/dD(c,m) = k*([c,m]==[c*,b] - q(c,m)).
    for (int c = 0; c < bank.num_classes; ++c)
      for (int m = 0; m < bank.modes; ++m) {
        const double w = k * (((c == s.label && m == best) ? 1.0 : 0.0) - q(c, m)) * inv_n;
        if (w == 0.0) continue;
        const Eigen::VectorXd diff = s.embedding - bank.centers.row(bank.row(c, m)).transpose();
        out.d_embeddings.row(i) += 2.0 * w * diff.transpose();
        out.d_centers.row(bank.row(c, m)) -= 2.0 * w * diff.transpose();
      }
  }
  return out;
}

void scatter_sample_grads(const SampleSet& samples, const Eigen::MatrixXd& grad, double scale, int image_id,
                          EmbeddingField& field_grad) {
  require_shape(grad.rows() == static_cast<Eigen::Index>(samples.size()), "sample grad row count mismatch");
  if (scale == 0.0) return;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples.samples[i];
    if (s.image_id != image_id) continue;
    for (int d = 0; d < field_grad.channels; ++d) field_grad(d, s.row, s.col) += scale * grad(i, d);
  }
}

}  // namespace drsl::mmdl
