#include <gtest/gtest.h>

#include <fstream>

#include "drsl/checkpoint.hpp"
#include "helpers.hpp"

namespace fs = std::filesystem;
using namespace drsl;

namespace {
SegNet perturbed_net() {
  ModelConfig mc;
  mc.num_classes = 3;
  mc.encoder_width = 6;
  mc.embed_dim = 3;
  mc.modes = 2;
  mc.init_seed = 11;
  SegNet net(mc);
  Rng rng(2);
  for (auto& p : net.params())
    for (double& v : p.value) v += 1e-3 * rng.normal();
  return net;
}
}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  const SegNet net = perturbed_net();
  const fs::path dir = test::scratch_dir("ckpt_roundtrip");
  save_checkpoint(net, dir);
  const SegNet back = load_checkpoint(dir);
  EXPECT_EQ(back.config(), net.config());
  ASSERT_EQ(back.params().size(), net.params().size());
  for (std::size_t i = 0; i < net.params().size(); ++i) {
    EXPECT_EQ(back.params()[i].name, net.params()[i].name);
    EXPECT_EQ(back.params()[i].shape, net.params()[i].shape);
    EXPECT_EQ(back.params()[i].value, net.params()[i].value);
  }
  Rng rng(3);
  const ImageTensor img = test::random_image(16, 16, rng);
  EXPECT_EQ(back.forward(img, true).embeddings.data, net.forward(img, true).embeddings.data);
}

TEST(Checkpoint, CorruptFilesAreRejected) {
  const SegNet net = perturbed_net();
  const fs::path dir = test::scratch_dir("ckpt_corrupt");
  save_checkpoint(net, dir);
  const fs::path victim = dir / "encoder.conv2.weight.f64";
  ASSERT_TRUE(fs::exists(victim));
  fs::resize_file(victim, fs::file_size(victim) - 8);
  EXPECT_THROW(load_checkpoint(dir), IoError);
  EXPECT_THROW(load_checkpoint(dir / "missing"), IoError);
}

TEST(Checkpoint, ModeCentersCsvHasOneRowPerMode) {
  const SegNet net = perturbed_net();
  const fs::path dir = test::scratch_dir("ckpt_csv");
  write_mode_centers_csv(net, dir / "centers.csv");
  std::ifstream in(dir / "centers.csv");
  int lines = 0;
  for (std::string s; std::getline(in, s);) ++lines;
  EXPECT_EQ(lines, 1 + 3 * 2);
}
