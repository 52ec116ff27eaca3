#include <gtest/gtest.h>

#include <cmath>

#include "drsl/metrics.hpp"
#include "helpers.hpp"

using namespace drsl;

namespace {
LabelMap map2x2(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d) {
  LabelMap m(2, 2);
  m.labels = {a, b, c, d};
  return m;
}
}  // namespace

TEST(Confusion, WorkedTwoByTwo) {
  const LabelMap gt = map2x2(0, 0, 1, 1), pred = map2x2(0, 1, 1, 1);
  const ConfusionMatrix cm = confusion(pred, gt, 2);
  EXPECT_EQ(cm(0, 0), 1);
  EXPECT_EQ(cm(0, 1), 1);
  EXPECT_EQ(cm(1, 0), 0);
  EXPECT_EQ(cm(1, 1), 2);
  EXPECT_EQ(cm.total(), 4);
  const MeanIoU m = miou(cm);
  EXPECT_NEAR(m.per_class[0], 0.5, 1e-12);
  EXPECT_NEAR(m.per_class[1], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(m.mean, 0.5833, 1e-4);
}

TEST(Confusion, DiagonalIgnoreAndShapeErrors) {
  Rng rng(1);
  const LabelMap x = test::random_labels(7, 5, 4, rng);
  const ConfusionMatrix cm = confusion(x, x, 4);
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b)
      if (a != b) EXPECT_EQ(cm(a, b), 0);
  EXPECT_NEAR(miou(cm).mean, 1.0, 1e-12);

  const LabelMap ignored(7, 5, kIgnore);
  EXPECT_EQ(confusion(x, ignored, 4).total(), 0);
  EXPECT_THROW(confusion(x, LabelMap(5, 7, 0), 4), ShapeError);
}

TEST(Confusion, AbsentClassExcludedFromMean) {
  const LabelMap gt = map2x2(0, 0, 1, 1), pred = map2x2(0, 1, 1, 1);
  const MeanIoU m = miou(confusion(pred, gt, 3));
  EXPECT_TRUE(std::isnan(m.per_class[2]));
  EXPECT_NEAR(m.mean, (0.5 + 2.0 / 3.0) / 2.0, 1e-12);
}

TEST(Confusion, AdditiveOverPartitions) {
  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    const LabelMap gt = test::random_labels(6, 8, 3, rng), pred = test::random_labels(6, 8, 3, rng);
    LabelMap top_gt(3, 8), top_pred(3, 8), bot_gt(3, 8), bot_pred(3, 8);
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 8; ++x) {
        (y < 3 ? top_gt : bot_gt)(y % 3, x) = gt(y, x);
        (y < 3 ? top_pred : bot_pred)(y % 3, x) = pred(y, x);
      }
    ConfusionMatrix sum = confusion(top_pred, top_gt, 3);
    sum += confusion(bot_pred, bot_gt, 3);
    EXPECT_EQ(sum, confusion(pred, gt, 3));
  }
}

TEST(Confusion, MaskRestrictsPixels) {
  const LabelMap gt = map2x2(0, 0, 1, 1), pred = map2x2(0, 1, 1, 1);
  const std::vector<std::uint8_t> mask = {1, 0, 0, 1};
  const ConfusionMatrix cm = confusion(pred, gt, 2, mask);
  EXPECT_EQ(cm.total(), 2);
  EXPECT_EQ(cm(0, 1), 0);
}

TEST(SelfEntropy, OneHotIsZeroUniformIsOne) {
  ProbTensor onehot(3, 2, 2, 0.0);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) onehot((x + y) % 3, y, x) = 1.0;
  const std::vector<ProbTensor> a = {onehot};
  EXPECT_NEAR(normalized_self_entropy(a), 0.0, 1e-12);
  const std::vector<ProbTensor> b = {ProbTensor(5, 3, 3, 0.2), ProbTensor(5, 1, 2, 0.2)};
  EXPECT_NEAR(normalized_self_entropy(b), 1.0, 1e-12);
  ProbTensor half(2, 1, 1);
  half.data = {0.25, 0.75};
  const std::vector<ProbTensor> c = {half};
  EXPECT_NEAR(normalized_self_entropy(c), -(0.25 * std::log(0.25) + 0.75 * std::log(0.75)) / std::log(2.0), 1e-12);
}
