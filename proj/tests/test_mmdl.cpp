#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <map>

#include "drsl/mmdl.hpp"
#include "helpers.hpp"

using namespace drsl;
using namespace drsl::mmdl;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

ModeBank random_bank(int k, int m, int d, Rng& rng, double s2 = 0.5) {
  Eigen::MatrixXd c(k * m, d);
  for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = rng.normal();
  return ModeBank(k, m, s2, c);
}

Eigen::VectorXd random_vec(int d, Rng& rng, double scale = 1.0) {
  Eigen::VectorXd v(d);
  for (int i = 0; i < d; ++i) v(i) = scale * rng.normal();
  return v;
}

SampleSet one_sample(const Eigen::VectorXd& e, int label) {
  SampleSet s;
  s.samples.push_back({e, label, 0, 0, 0});
  return s;
}

// Posterior evaluated term by term in long double.
std::vector<long double> posterior_oracle(const Eigen::VectorXd& e, const ModeBank& b) {
  std::vector<long double> w;
  long double z = 0;
  for (Eigen::Index r = 0; r < b.centers.rows(); ++r) {
    long double d = 0;
    for (Eigen::Index j = 0; j < e.size(); ++j) {
      const long double diff = static_cast<long double>(e(j)) - b.centers(r, j);
      d += diff * diff;
    }
    w.push_back(std::exp(-d / (2.0L * b.sigma2)));
    z += w.back();
  }
  for (auto& v : w) v /= z;
  return w;
}

}  // namespace

TEST(DownscaleLabels, IdentityConstantAndAnchors) {
  Rng rng(1);
  const LabelMap l = test::random_labels(6, 6, 4, rng);
  EXPECT_EQ(downscale_labels(l, 1), l);

  const LabelMap c(4, 4, 3);
  const LabelMap c2 = downscale_labels(c, 2);
  EXPECT_EQ(c2.height, 2);
  for (auto v : c2.labels) EXPECT_EQ(v, 3);

  LabelMap checker(4, 4, 0);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) checker(y, x) = static_cast<std::uint8_t>((x + y) % 2);
  const LabelMap d = downscale_labels(checker, 2);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) EXPECT_EQ(d(y, x), checker(2 * y, 2 * x));
}

TEST(ModeDist2, UnitOffsetAndOracle) {
  ModeBank b(2, 1, 0.5, Eigen::MatrixXd::Zero(2, 2));
  b.centers.row(1) = vec({1, 0});
  const Eigen::MatrixXd d = mode_dist2(vec({0, 0}), b);
  EXPECT_EQ(d(0, 0), 0.0);
  EXPECT_EQ(d(1, 0), 1.0);

  Rng rng(2);
  const ModeBank r = random_bank(3, 4, 5, rng);
  const Eigen::VectorXd e = random_vec(5, rng);
  const Eigen::MatrixXd got = mode_dist2(e, r);
  for (int c = 0; c < 3; ++c)
    for (int m = 0; m < 4; ++m) {
      double s = 0.0;
      for (int j = 0; j < 5; ++j) s += (e(j) - r.centers(r.row(c, m), j)) * (e(j) - r.centers(r.row(c, m), j));
      EXPECT_NEAR(got(c, m), s, 1e-12);
    }
}

TEST(Posterior, WorkedTwoClassExample) {
  Eigen::MatrixXd d(2, 1);
  d << 0.0, 1.0;
  const Eigen::MatrixXd q = mode_posteriors(d, 0.5);
  const double e1 = std::exp(-1.0);
  EXPECT_NEAR(q(0, 0), 1.0 / (1.0 + e1), 1e-12);
  EXPECT_NEAR(q(1, 0), e1 / (1.0 + e1), 1e-12);
  EXPECT_NEAR(q(0, 0), 0.7311, 1e-4);
  EXPECT_NEAR(q(1, 0), 0.2689, 1e-4);
}

TEST(Posterior, EqualDistancesAreUniformAndShiftInvariant) {
  const Eigen::MatrixXd q = mode_posteriors(Eigen::MatrixXd::Constant(3, 4, 2.7), 0.5);
  for (Eigen::Index i = 0; i < q.size(); ++i) EXPECT_NEAR(q.data()[i], 1.0 / 12.0, 1e-15);

  Rng rng(3);
  Eigen::MatrixXd d(3, 2);
  for (Eigen::Index i = 0; i < d.size(); ++i) d.data()[i] = std::abs(rng.normal()) * 4;
  const Eigen::MatrixXd a = mode_posteriors(d, 0.5);
  const Eigen::MatrixXd b = mode_posteriors(d.array() + 37.0, 0.5);
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Posterior, SumsToOneOverTenThousandTrials) {
  Rng rng(4);
  double worst = 0.0, worst_oracle = 0.0;
  for (int t = 0; t < 10000; ++t) {
    const int k = 2 + static_cast<int>(rng.index(5)), m = 1 + static_cast<int>(rng.index(4));
    const int d = 1 + static_cast<int>(rng.index(6));
    const ModeBank b = random_bank(k, m, d, rng, rng.uniform(0.1, 2.0));
    const Eigen::VectorXd e = random_vec(d, rng, 3.0);
    const Eigen::MatrixXd q = mode_posteriors(mode_dist2(e, b), b.sigma2);
    worst = std::max(worst, std::abs(q.sum() - 1.0));
    const auto oracle = posterior_oracle(e, b);
    for (int c = 0; c < k; ++c)
      for (int mm = 0; mm < m; ++mm)
        worst_oracle = std::max(worst_oracle, static_cast<double>(std::abs(q(c, mm) - oracle[b.row(c, mm)])));
  }
  EXPECT_LE(worst, 1e-6);
  EXPECT_LE(worst_oracle, 1e-9);
}

TEST(ClassPosterior, MaxOverModes) {
  Eigen::MatrixXd q(2, 3);
  q << 0.1, 0.6, 0.05, 0.1, 0.1, 0.05;
  EXPECT_DOUBLE_EQ(class_posterior(q)(0), 0.6);

  Eigen::MatrixXd one(3, 1);
  one << 0.2, 0.3, 0.5;
  const Eigen::VectorXd big_q = class_posterior(one);
  EXPECT_EQ(big_q, one.col(0));
  EXPECT_NEAR(big_q.sum(), 1.0, 1e-15);
}

TEST(ClassPosterior, MatchesEnumerationOverTenThousandTrials) {
  Rng rng(5);
  for (int t = 0; t < 10000; ++t) {
    const int k = 1 + static_cast<int>(rng.index(6)), m = 1 + static_cast<int>(rng.index(5));
    Eigen::MatrixXd q(k, m);
    for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = rng.uniform();
    const Eigen::VectorXd got = class_posterior(q);
    for (int c = 0; c < k; ++c) {
      double best = -1.0;
      for (int mm = 0; mm < m; ++mm) best = q(c, mm) > best ? q(c, mm) : best;
      ASSERT_EQ(got(c), best);
    }
  }
}

TEST(SampleEmbeddings, CapsPerClassAndSkipsIgnore) {
  const int h = 40, w = 40;
  EmbeddingField field(2, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      field(0, y, x) = y;
      field(1, y, x) = x;
    }
  LabelMap l(h, w, 0);  // 1000+ pixels of class 0
  for (int i = 0; i < 10; ++i) l(0, i) = 1;
  for (int i = 10; i < 20; ++i) l(0, i) = kIgnore;
  Rng rng(6);
  const SampleSet s = sample_embeddings(field, l, 64, rng, 3, Domain::kTarget);
  std::map<int, int> per_class;
  for (const auto& smp : s.samples) {
    ++per_class[smp.label];
    EXPECT_EQ(l(smp.row, smp.col), smp.label);
    EXPECT_EQ(smp.embedding(0), smp.row);
    EXPECT_EQ(smp.embedding(1), smp.col);
    EXPECT_EQ(smp.image_id, 3);
  }
  EXPECT_EQ(s.domain, Domain::kTarget);
  EXPECT_EQ(per_class[0], 64);
  EXPECT_EQ(per_class[1], 10);
  EXPECT_EQ(per_class.size(), 2u);

  Rng again(6);
  const SampleSet s2 = sample_embeddings(field, l, 64, again, 3, Domain::kTarget);
  ASSERT_EQ(s2.size(), s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_EQ(s.samples[i].row, s2.samples[i].row);
    EXPECT_EQ(s.samples[i].col, s2.samples[i].col);
  }
}

TEST(LossEmb, HandArithmeticExamples) {
  Eigen::MatrixXd c(2, 1);
  c << 0.0, 2.0;
  const ModeBank b(2, 1, 0.5, c);
  EXPECT_NEAR(loss_emb(one_sample(vec({0.5}), 0), b, 1.0).value, 0.0, 1e-12);
  EXPECT_NEAR(loss_emb(one_sample(vec({1.2}), 0), b, 1.0).value, 1.8, 1e-12);
  EXPECT_NEAR(loss_emb(one_sample(vec({0.0}), 0), b, 1.0).value, 0.0, 1e-12);
}

TEST(LossEmb, NonNegativeZeroIffMarginsHoldAndSumsOverSamples) {
  Rng rng(7);
  for (int t = 0; t < 200; ++t) {
    const ModeBank b = random_bank(3, 2, 3, rng);
    SampleSet s;
    double manual = 0.0;
    bool all_satisfied = true;
    for (int i = 0; i < 5; ++i) {
      const int label = static_cast<int>(rng.index(3));
      const Eigen::VectorXd e = random_vec(3, rng);
      s.samples.push_back({e, label, 0, 0, i});
      const Eigen::MatrixXd d = mode_dist2(e, b);
      double wrong = std::numeric_limits<double>::infinity();
      for (int c = 0; c < 3; ++c)
        if (c != label) wrong = std::min(wrong, d.row(c).minCoeff());
      const double h = d.row(label).minCoeff() - wrong + 0.5;
      manual += std::max(0.0, h);
      all_satisfied = all_satisfied && h <= 0.0;
    }
    const double v = loss_emb(s, b, 0.5).value;
    EXPECT_GE(v, 0.0);
    EXPECT_NEAR(v, manual, 1e-12);
    EXPECT_EQ(v == 0.0, all_satisfied);
  }
}

TEST(LossCls, ClosedForms) {
  Eigen::MatrixXd c(2, 1);
  c << 0.0, 1.0;
  const ModeBank b(2, 1, 0.5, c);
  EXPECT_NEAR(loss_cls(one_sample(vec({0.0}), 0), b).value, -std::log(1.0 / (1.0 + std::exp(-1.0))), 1e-12);
  EXPECT_NEAR(loss_cls(one_sample(vec({0.0}), 0), b).value, 0.3133, 1e-4);

  const ModeBank same(3, 2, 0.5, Eigen::MatrixXd::Zero(6, 2));
  EXPECT_NEAR(loss_cls(one_sample(vec({0.3, -0.4}), 1), same).value, std::log(6.0), 1e-12);

  Eigen::MatrixXd far(4, 1);
  far << 0.0, 50.0, -60.0, 70.0;
  EXPECT_NEAR(loss_cls(one_sample(vec({0.0}), 0), ModeBank(4, 1, 0.5, far)).value, 0.0, 1e-12);
}

TEST(Mmdl, TranslationEquivariance) {
  Rng rng(8);
  for (int t = 0; t < 100; ++t) {
    ModeBank b = random_bank(3, 2, 4, rng);
    SampleSet s;
    for (int i = 0; i < 6; ++i) s.samples.push_back({random_vec(4, rng), static_cast<int>(rng.index(3)), 0, 0, i});
    const Eigen::VectorXd shift = random_vec(4, rng, 5.0);
    ModeBank bt = b;
    bt.centers.rowwise() += shift.transpose();
    SampleSet st = s;
    for (auto& smp : st.samples) smp.embedding += shift;

    const Eigen::MatrixXd d0 = mode_dist2(s.samples[0].embedding, b);
    const Eigen::MatrixXd d1 = mode_dist2(st.samples[0].embedding, bt);
    EXPECT_LT((d0 - d1).cwiseAbs().maxCoeff(), 1e-6);
    const Eigen::MatrixXd q0 = mode_posteriors(d0, b.sigma2), q1 = mode_posteriors(d1, b.sigma2);
    EXPECT_LT((q0 - q1).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LT((class_posterior(q0) - class_posterior(q1)).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_NEAR(loss_emb(s, b, 1.0).value, loss_emb(st, bt, 1.0).value, 1e-6);
    EXPECT_NEAR(loss_cls(s, b).value, loss_cls(st, bt).value, 1e-6);
  }
}

TEST(Mmdl, GradientShapesAndCenterMassBalance) {
  Rng rng(9);
  const ModeBank b = random_bank(3, 2, 4, rng);
  SampleSet s;
  for (int i = 0; i < 7; ++i) s.samples.push_back({random_vec(4, rng), static_cast<int>(rng.index(3)), 0, 0, i});
  for (const LossGrad& g : {loss_emb(s, b, 1.0), loss_cls(s, b)}) {
    EXPECT_EQ(g.d_embeddings.rows(), 7);
    EXPECT_EQ(g.d_centers.rows(), 6);
    // Distances depend on differences only, so gradients sum to zero.
    const Eigen::VectorXd total = g.d_embeddings.colwise().sum() + g.d_centers.colwise().sum();
    EXPECT_LT(total.cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Mmdl, ScatterPlacesGradientsAtSamplePositions) {
  SampleSet s;
  s.samples.push_back({vec({0, 0}), 0, 1, 2, 3});
  s.samples.push_back({vec({0, 0}), 1, 0, 1, 1});
  s.samples.push_back({vec({0, 0}), 1, 1, 0, 0});
  Eigen::MatrixXd g(3, 2);
  g << 1, 2, 3, 4, 5, 6;
  EmbeddingField field(2, 4, 4, 0.0);
  scatter_sample_grads(s, g, 0.5, 1, field);
  EXPECT_EQ(field(0, 2, 3), 0.5);
  EXPECT_EQ(field(1, 2, 3), 1.0);
  EXPECT_EQ(field(0, 0, 0), 2.5);
  EXPECT_EQ(field(0, 1, 1), 0.0);  // belongs to image 0
}
