#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "helpers.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(DRSL_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

const std::string kTiny =
    "--set encoder_width=8 --set embed_dim=4 --set M=2 --set T_e=8 --set N_e=16 --set crop=16 "
    "--set source_steps=3 --set steps_per_round=2 --set rounds=2";

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("gradcheck --no-such-flag"), 2);
  EXPECT_EQ(run("gradcheck --loss nope"), 2);
}

TEST(Cli, MissingInputsExitOne) {
  const fs::path dir = drsl::test::scratch_dir("cli_missing");
  EXPECT_EQ(run("train-source --data " + (dir / "absent").string() + " --out " + (dir / "run").string()), 1);
}

TEST(Cli, PipelineArtifactsAndIdempotence) {
  const fs::path dir = drsl::test::scratch_dir("cli_pipeline");
  const std::string data = (dir / "data").string();
  ASSERT_EQ(run("gen-data --set image_size=32 --n-source 3 --n-target 3 --out " + data), 0);
  const std::string first = slurp(dir / "data" / "manifest.json");
  ASSERT_EQ(run("gen-data --set image_size=32 --n-source 3 --n-target 3 --out " + data), 0);
  EXPECT_EQ(slurp(dir / "data" / "manifest.json"), first);

  const std::string src = (dir / "src").string();
  ASSERT_EQ(run("train-source --data " + data + " --out " + src + " " + kTiny), 0);
  EXPECT_TRUE(fs::exists(dir / "src" / "checkpoints" / "source" / "manifest.json"));
  EXPECT_TRUE(fs::exists(dir / "src" / "metrics.csv"));
  EXPECT_TRUE(fs::exists(dir / "src" / "config.json"));

  const std::string ckpt = (dir / "src" / "checkpoints" / "source").string();
  ASSERT_EQ(run("pseudo-label --data " + data + " --checkpoint " + ckpt + " --round 1 --out " +
                (dir / "pl").string()),
            0);
  EXPECT_DOUBLE_EQ(read_json(dir / "pl" / "pseudo_labels.json").at("delta").get<double>(), 0.25);

  for (const char* name : {"ad1", "ad2"})
    ASSERT_EQ(run("adapt --data " + data + " --checkpoint " + ckpt + " --out " + (dir / name).string() + " " + kTiny),
              0);
  EXPECT_EQ(slurp(dir / "ad1" / "metrics.csv"), slurp(dir / "ad2" / "metrics.csv"));
  EXPECT_EQ(slurp(dir / "ad1" / "round_reports.json"), slurp(dir / "ad2" / "round_reports.json"));
  EXPECT_TRUE(fs::exists(dir / "ad1" / "checkpoints" / "round_1"));
  EXPECT_TRUE(fs::exists(dir / "ad1" / "pseudo_labels" / "round_0" / "pseudo_labels.json"));
  const auto reports = read_json(dir / "ad1" / "round_reports.json");
  ASSERT_EQ(reports.size(), 2u);
  EXPECT_FALSE(reports[0].contains("pl_miou") && !reports[0]["pl_miou"].is_null());

  ASSERT_EQ(run("adapt --eval --data " + data + " --checkpoint " + ckpt + " --pseudo-labels " + (dir / "pl").string() +
                " --out " + (dir / "ad3").string() + " " + kTiny),
            0);
  const auto scored = read_json(dir / "ad3" / "round_reports.json");
  EXPECT_DOUBLE_EQ(scored[0].at("delta").get<double>(), 0.25);  // provided round-0 labels
  EXPECT_TRUE(scored[0].at("pl_miou").is_number());

  ASSERT_EQ(run("evaluate --data " + data + " --checkpoint " + ckpt + " --json " + (dir / "ev.json").string()), 0);
  const double m = read_json(dir / "ev.json").at("miou").get<double>();
  EXPECT_GE(m, 0.0);
  EXPECT_LE(m, 1.0);
}

TEST(Cli, GradcheckSingleLoss) { EXPECT_EQ(run("gradcheck --loss cls --seed 1"), 0); }
