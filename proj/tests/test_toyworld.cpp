#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <set>

#include <Eigen/Dense>

#include "drsl/toyworld.hpp"
#include "drsl/trainer.hpp"
#include "helpers.hpp"

namespace fs = std::filesystem;
using namespace drsl;

namespace {

ToySpec shifted_spec(std::uint64_t seed) {
  ToySpec s;
  s.seed = seed;
  s.shift = {0.1, -0.1, 0.04, 1.3};
  return s;
}

// Independent re-derivation of the shape predicates from the placement
// record: pixel centers, half-open rectangles, closed discs and bands.
bool oracle_covers(const Placement& p, int n, int y, int x) {
  const double cy = y + 0.5, cx = x + 0.5;
  switch (p.kind) {
    case ShapeKind::kRect:
      return x >= p.x0 && x < p.x1 && y >= p.y0 && y < p.y1;
    case ShapeKind::kDisc:
      return std::hypot(cx - p.cx, cy - p.cy) <= p.radius + 1e-12;
    case ShapeKind::kBand: {
      const double along = (cx - n / 2.0) * std::cos(p.angle) + (cy - n / 2.0) * std::sin(p.angle);
      return std::abs(along - p.offset) <= p.radius + 1e-12;
    }
  }
  return false;
}

// Index of the last placement painted over each pixel, -1 for background.
std::vector<int> owners(const Scene& s, int n) {
  std::vector<int> own(static_cast<std::size_t>(n) * n, -1);
  for (std::size_t k = 0; k < s.placements.size(); ++k)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        if (oracle_covers(s.placements[k], n, y, x)) own[static_cast<std::size_t>(y) * n + x] = static_cast<int>(k);
  return own;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Toyworld, SameSeedAndIndexIsBitIdentical) {
  ToySpec s = shifted_spec(7);
  for (Domain d : {Domain::kSource, Domain::kTarget}) {
    const Scene a = gen_scene(s, d, 0);
    const Scene b = gen_scene(s, d, 0);
    EXPECT_EQ(a.image.data, b.image.data);
    EXPECT_EQ(a.labels, b.labels);
  }
}

TEST(Toyworld, ZeroShiftMakesDomainsPixelIdentical) {
  ToySpec s;
  s.seed = 3;
  for (int i = 0; i < 5; ++i) {
    const Scene a = gen_scene(s, Domain::kSource, i);
    const Scene b = gen_scene(s, Domain::kTarget, i);
    EXPECT_EQ(a.image.data, b.image.data) << "index " << i;
    EXPECT_EQ(a.labels, b.labels);
  }
}

TEST(Toyworld, ShiftChangesAppearanceButNotLabels) {
  const ToySpec s = shifted_spec(1);
  const Scene a = gen_scene(s, Domain::kSource, 2);
  const Scene b = gen_scene(s, Domain::kTarget, 2);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(a.image.data, b.image.data);
}

TEST(Toyworld, LabelsMatchPlacementRecount) {
  const ToySpec s = shifted_spec(11);
  const int n = s.image_size;
  for (int i = 0; i < 12; ++i) {
    const Scene sc = gen_scene(s, Domain::kSource, i);
    const auto own = owners(sc, n);
    std::map<int, long> expected, actual;
    for (std::size_t p = 0; p < own.size(); ++p) {
      const int cls = own[p] < 0 ? 0 : sc.placements[static_cast<std::size_t>(own[p])].cls;
      ++expected[cls];
      ++actual[sc.labels.labels[p]];
      ASSERT_LT(sc.labels.labels[p], s.num_classes);
    }
    EXPECT_EQ(expected, actual) << "scene " << i;
  }
}

TEST(Toyworld, ImagesStayInUnitRange) {
  const ToySpec s = shifted_spec(5);
  const Scene sc = gen_scene(s, Domain::kTarget, 0);
  for (double v : sc.image.data) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
}

TEST(Toyworld, InvalidSpecIsRejected) {
  ToySpec s;
  s.num_classes = 1;
  EXPECT_THROW(s.validate(), ConfigError);
  s = ToySpec{};
  s.min_shapes = 5;
  s.max_shapes = 2;
  EXPECT_THROW(s.validate(), ConfigError);
  s = ToySpec{};
  s.shift.brightness_delta = 0.9;
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Toyworld, ManifestListsEveryFileAndKeepsGroundTruthApart) {
  const fs::path dir = test::scratch_dir("toy_manifest");
  const DatasetManifest m = gen_dataset(shifted_spec(2), 8, 8, dir);
  ASSERT_EQ(m.source.size(), 8u);
  ASSERT_EQ(m.source_labels.size(), 8u);
  ASSERT_EQ(m.target.size(), 8u);
  ASSERT_EQ(m.target_eval_labels.size(), 8u);
  for (const auto* list : {&m.source, &m.source_labels, &m.target, &m.target_eval_labels})
    for (const auto& f : *list) EXPECT_TRUE(fs::exists(dir / f)) << f;
  for (const auto& f : m.target_eval_labels) EXPECT_EQ(fs::path(f).begin()->string(), kEvalOnlyDir);
  for (const auto* list : {&m.source, &m.source_labels, &m.target})
    for (const auto& f : *list) EXPECT_NE(fs::path(f).begin()->string(), kEvalOnlyDir);

  const DatasetManifest back = read_manifest(dir);
  EXPECT_EQ(back.spec, m.spec);
  EXPECT_EQ(back.target, m.target);

  // The training loader works with the eval-only tree removed.
  fs::remove_all(dir / kEvalOnlyDir);
  const TrainingData data = load_training_data(back);
  EXPECT_EQ(data.target_images.size(), 8u);
  EXPECT_EQ(data.source_labels.size(), 8u);
  EXPECT_THROW(load_target_eval_labels(back), IoError);
}

TEST(Toyworld, RegenerationIsByteIdentical) {
  const fs::path a = test::scratch_dir("toy_regen_a");
  const fs::path b = test::scratch_dir("toy_regen_b");
  const DatasetManifest ma = gen_dataset(shifted_spec(4), 3, 3, a);
  gen_dataset(shifted_spec(4), 3, 3, b);
  std::vector<std::string> files = {"manifest.json"};
  for (const auto* list : {&ma.source, &ma.source_labels, &ma.target, &ma.target_eval_labels})
    files.insert(files.end(), list->begin(), list->end());
  for (const auto& f : files) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST(Toyworld, SplitsNeverShareGeometry) {
  const ToyBenchmark bench = make_benchmark(shifted_spec(0), 6, 6);
  for (const auto& t : bench.target_eval_labels)
    for (const auto& s : bench.train.source_labels) EXPECT_NE(t, s);
}

TEST(Toyworld, LoadedDatasetMatchesInMemoryBenchmark) {
  const fs::path dir = test::scratch_dir("toy_load");
  const DatasetManifest m = gen_dataset(shifted_spec(6), 2, 2, dir);
  const TrainingData disk = load_training_data(m);
  const ToyBenchmark mem = make_benchmark(shifted_spec(6), 2, 2);
  EXPECT_EQ(disk.source_labels, mem.train.source_labels);
  EXPECT_EQ(load_target_eval_labels(m), mem.target_eval_labels);
  // Images round-trip through 8-bit PNG exactly because rendering quantizes.
  EXPECT_EQ(disk.source_images[0].data, mem.train.source_images[0].data);
  EXPECT_EQ(disk.target_images[1].data, mem.train.target_images[1].data);
}

// Sub-styles of one class should be linearly separable from features of a
// briefly trained source model.
TEST(Toyworld, SubStylesAreLinearlySeparableOnSourceFeatures) {
  const ToySpec spec = shifted_spec(0);
  const int n_images = 32;
  const ToyBenchmark bench = make_benchmark(spec, n_images, 1);
  TrainConfig cfg = test::tiny_config();
  cfg.encoder_width = 32;
  cfg.embed_dim = 8;
  cfg.crop = 64;
  cfg.source_steps = 300;
  cfg.lr_source = 0.02;
  const SourceTrainResult src = train_source(cfg, bench.train);

  const int n = spec.image_size, stride = kEncoderStride;
  std::vector<double> accuracies;
  for (int cls = 1; cls < spec.num_classes; ++cls) {
    std::vector<Eigen::VectorXd> feats[2];
    std::vector<int> styles[2];
    for (int i = 0; i < n_images; ++i) {
      const Scene sc = gen_scene(spec, Domain::kSource, i);
      const auto own = owners(sc, n);
      const BaseFeatures f = src.net.encode(sc.image);
      for (int fy = 0; fy < f.height; ++fy)
        for (int fx = 0; fx < f.width; ++fx) {
          const int o = own[static_cast<std::size_t>(fy * stride) * n + fx * stride];
          if (o < 0) continue;
          bool pure = true;
          for (int dy = 0; dy < stride && pure; ++dy)
            for (int dx = 0; dx < stride && pure; ++dx)
              pure = own[static_cast<std::size_t>(fy * stride + dy) * n + fx * stride + dx] == o;
          const Placement& p = sc.placements[static_cast<std::size_t>(o)];
          if (!pure || p.cls != cls) continue;
          Eigen::VectorXd v(f.channels + 1);
          for (int c = 0; c < f.channels; ++c) v(c) = f(c, fy, fx);
          v(f.channels) = 1.0;
          feats[i % 2].push_back(v);
          styles[i % 2].push_back(p.style);
        }
    }
    if (feats[0].size() < 20 || feats[1].size() < 20) continue;
    const std::set<int> seen(styles[0].begin(), styles[0].end());
    if (seen.size() < 2) continue;

    // Ridge regression onto one-hot style targets.
    const int d = static_cast<int>(feats[0][0].size()), s = spec.styles_per_class;
    Eigen::MatrixXd x(static_cast<Eigen::Index>(feats[0].size()), d), yv = Eigen::MatrixXd::Zero(x.rows(), s);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      x.row(r) = feats[0][static_cast<std::size_t>(r)].transpose();
      yv(r, styles[0][static_cast<std::size_t>(r)]) = 1.0;
    }
    const Eigen::MatrixXd w =
        (x.transpose() * x + 1e-3 * Eigen::MatrixXd::Identity(d, d)).ldlt().solve(x.transpose() * yv);
    int correct = 0;
    for (std::size_t r = 0; r < feats[1].size(); ++r) {
      Eigen::Index best = 0;
      (feats[1][r].transpose() * w).maxCoeff(&best);
      correct += static_cast<int>(best) == styles[1][r];
    }
    accuracies.push_back(static_cast<double>(correct) / static_cast<double>(feats[1].size()));
  }
  ASSERT_FALSE(accuracies.empty());
  double mean = 0.0;
  for (double a : accuracies) mean += a;
  mean /= static_cast<double>(accuracies.size());
  EXPECT_GE(mean, 0.60);
}
