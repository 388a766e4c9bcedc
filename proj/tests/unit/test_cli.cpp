#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "spcnet/checkpoint.hpp"
#include "spcnet/cli.hpp"
#include "spcnet/dataset.hpp"

using namespace spcnet;
namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("spcnet_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream cfg(dir / "tiny.cfg");
    cfg << "width_scale=0.0625\nknn_k=4\nkernel_hidden=4\n";
  }
  std::string p(const std::string& name) const { return (dir / name).string(); }
  int cli(const std::vector<std::string>& args) const { return cli::run(args); }
  std::string slurp(const std::string& name) const {
    std::ifstream in(dir / name, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  }
  void train_small(const std::string& ckpt) const {
    ASSERT_EQ(cli({"gen-data", "--out", p("data"), "--shapes", "sphere,cube", "--count", "2", "--points", "64",
                   "--seed", "1"}),
              cli::kExitOk);
    ASSERT_EQ(cli({"train", "--data", p("data"), "--out", p(ckpt), "--epochs", "1", "--seed", "2", "--loss-mode",
                   "1l", "--config", p("tiny.cfg"), "--trace", p("trace.csv")}),
              cli::kExitOk);
  }
  fs::path dir;
};

}  // namespace

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(cli({}), cli::kExitUsage);
  EXPECT_EQ(cli({"frobnicate"}), cli::kExitUsage);
  EXPECT_EQ(cli({"gen-data", "--out", p("d"), "--bogus"}), cli::kExitUsage);
  EXPECT_EQ(cli({"ablate", "--variant", "nope", "--data", p("d"), "--out", p("c")}), cli::kExitUsage);
  EXPECT_EQ(cli({"train", "--data", p("d"), "--out", p("c"), "--loss-mode", "3l"}), cli::kExitUsage);
  EXPECT_EQ(cli({"--help"}), cli::kExitOk);
}

TEST_F(CliTest, RuntimeFailuresExitOne) {
  EXPECT_EQ(cli({"eval", "--ckpt", p("absent.spcn"), "--data", p("absent"), "--report", p("r.csv")}),
            cli::kExitRuntime);
  EXPECT_EQ(cli({"gen-data", "--out", p("d"), "--shapes", "teapot", "--count", "1", "--points", "16"}),
            cli::kExitRuntime);
}

TEST_F(CliTest, GenDataBookkeeping) {
  ASSERT_EQ(cli({"gen-data", "--out", p("d"), "--count", "8", "--points", "256", "--seed", "3"}), cli::kExitOk);
  const Dataset d = load_dataset(dir / "d");
  EXPECT_EQ(d.size(), 8u);
  EXPECT_EQ(d.points_per_shape(), 256u);
}

TEST_F(CliTest, TrainCompleteEval) {
  train_small("m.spcn");
  EXPECT_EQ(slurp("trace.csv").substr(0, 2), "1,");

  const Dataset d = load_dataset(dir / "data");
  const auto split = geometry::viewpoint_split(d.shapes[0].cloud, {1, 1, 1}, 0.5);
  {
    std::ofstream in(dir / "partial.xyz");
    in << "# partial cloud\n" << format_xyz(split.partial);
  }
  ASSERT_EQ(cli({"complete", "--ckpt", p("m.spcn"), "--in", p("partial.xyz"), "--out", p("done.xyz"),
                 "--emit-stages", p("stages")}),
            cli::kExitOk);
  const std::string done = slurp("done.xyz");
  EXPECT_EQ(std::count(done.begin(), done.end(), '\n'), 64);
  const std::string partial_lines = format_xyz(split.partial);
  EXPECT_EQ(done.substr(0, partial_lines.size()), partial_lines);
  for (const char* s : {"coarse", "mid", "fine", "final"}) EXPECT_TRUE(fs::exists(dir / "stages" / (std::string(s) + ".xyz")));

  ASSERT_EQ(cli({"eval", "--ckpt", p("m.spcn"), "--data", p("data"), "--viewpoint", "1,1,1", "--report", p("r.csv"),
                 "--stagewise"}),
            cli::kExitOk);
  const std::string report = slurp("r.csv");
  EXPECT_EQ(report.substr(0, report.find('\n')), "category,count,cd_coarse,cd_mid,cd_fine,cd_final");
  ASSERT_EQ(cli({"eval", "--ckpt", p("m.spcn"), "--data", p("data"), "--report", p("plain.csv")}), cli::kExitOk);
  EXPECT_EQ(slurp("plain.csv").substr(0, 24), "category,count,cd_x1000\n");
  EXPECT_EQ(cli({"eval", "--ckpt", p("m.spcn"), "--data", p("data"), "--viewpoint", "1,1", "--report", p("x.csv")}),
            cli::kExitRuntime);
}

TEST_F(CliTest, CompletionIsDeterministic) {
  train_small("a.spcn");
  const std::string first = slurp("a.spcn");
  const std::string trace = slurp("trace.csv");
  train_small("a.spcn");
  EXPECT_EQ(slurp("a.spcn"), first);
  EXPECT_EQ(slurp("trace.csv"), trace);
}

TEST_F(CliTest, AblateRpsSetsSampling) {
  ASSERT_EQ(cli({"gen-data", "--out", p("data"), "--shapes", "plane", "--count", "1", "--points", "64"}),
            cli::kExitOk);
  ASSERT_EQ(cli({"ablate", "--variant", "rps", "--data", p("data"), "--out", p("rps.spcn"), "--epochs", "1",
                 "--loss-mode", "1l", "--config", p("tiny.cfg"), "--trace", p("t.csv")}),
            cli::kExitOk);
  EXPECT_EQ(load_checkpoint(dir / "rps.spcn").nets[0].config.sampling, SamplingKind::rps);
}

TEST(AblationVariants, EachNameMapsToASwitch) {
  const ModelConfig base = ModelConfig::for_points(2048, 0.5);
  for (const auto& v : cli::ablation_variants()) {
    const ModelConfig c = cli::apply_variant(base, v);
    EXPECT_FALSE(c == base) << v;
    EXPECT_NO_THROW(c.validate()) << v;
  }
  EXPECT_EQ(cli::apply_variant(base, "scm1").upsample, (std::vector<std::size_t>{16}));
  EXPECT_EQ(cli::apply_variant(base, "scm2").upsample, (std::vector<std::size_t>{4, 4}));
  EXPECT_EQ(cli::apply_variant(base, "edge-conv").conv_kind, layers::ConvKind::edge);
  EXPECT_EQ(cli::apply_variant(base, "no-agg").use_aggregation, false);
  EXPECT_EQ(cli::apply_variant(base, "pnk-pn").partial_override, PartialOverride::pnk_pn);
}
