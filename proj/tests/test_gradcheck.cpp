#include <gtest/gtest.h>

#include <chrono>

#include "drsl/gradcheck.hpp"

using namespace drsl;

TEST(Gradcheck, QuadraticIsExact) {
  // L = 0.5 * |A w - b|^2 with analytic gradient A^T (A w - b).
  std::vector<double> w = {0.3, -1.2, 2.0};
  const double a[2][3] = {{1.0, 2.0, -1.0}, {0.5, -0.3, 4.0}};
  const double b[2] = {0.7, -2.0};
  auto loss = [&] {
    double s = 0.0;
    for (int i = 0; i < 2; ++i) {
      double r = -b[i];
      for (int j = 0; j < 3; ++j) r += a[i][j] * w[static_cast<std::size_t>(j)];
      s += 0.5 * r * r;
    }
    return s;
  };
  std::vector<double> grad(3, 0.0);
  for (int i = 0; i < 2; ++i) {
    double r = -b[i];
    for (int j = 0; j < 3; ++j) r += a[i][j] * w[static_cast<std::size_t>(j)];
    for (int j = 0; j < 3; ++j) grad[static_cast<std::size_t>(j)] += a[i][j] * r;
  }
  std::vector<gradcheck::Block> blocks = {{"w", w, grad}};
  const gradcheck::Result r = gradcheck::check(loss, blocks);
  EXPECT_LT(r.max_rel_error, 1e-8);
  EXPECT_EQ(r.checked, 3u);
  EXPECT_EQ(w, (std::vector<double>{0.3, -1.2, 2.0}));  // values restored
}

TEST(Gradcheck, CorruptedGradientIsReported) {
  std::vector<double> w = {1.0, 2.0};
  auto loss = [&] { return w[0] * w[0] + 3.0 * w[1]; };
  std::vector<gradcheck::Block> blocks = {{"w", w, {2.0, 3.3}}};
  const gradcheck::Result r = gradcheck::check(loss, blocks);
  EXPECT_FALSE(r.passed(gradcheck::kTolerance));
  EXPECT_NE(r.worst.find("w[1]"), std::string::npos);
}

TEST(Gradcheck, LossIdsParse) {
  for (auto id : gradcheck::all_losses()) EXPECT_EQ(gradcheck::parse_loss_id(gradcheck::to_string(id)), id);
  EXPECT_FALSE(gradcheck::parse_loss_id("nope").has_value());
  EXPECT_EQ(gradcheck::all_losses().size(), 6u);
}

TEST(Gradcheck, EveryLossPassesOnTheMicroModel) {
  const auto t0 = std::chrono::steady_clock::now();
  for (auto id : gradcheck::all_losses()) {
    const gradcheck::Result r = gradcheck::run(id, 0);
    EXPECT_LT(r.max_rel_error, gradcheck::kTolerance) << gradcheck::to_string(id) << " worst " << r.worst;
    EXPECT_GT(r.checked, 0u);
  }
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 60.0);
}
