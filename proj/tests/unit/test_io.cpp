#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "spcnet/checkpoint.hpp"
#include "spcnet/dataset.hpp"
#include "spcnet/errors.hpp"
#include "spcnet/training.hpp"
#include "test_support.hpp"

using namespace spcnet;
using namespace testing_support;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("spcnet_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Checkpoint small_checkpoint(std::size_t epochs = 1) {
  ModelConfig c = ModelConfig::for_points(64, 0.5);
  c.width_scale = 0.0625;
  c.knn_k = 4;
  c.kernel_hidden = 4;
  TrainConfig tc;
  tc.epochs = epochs;
  tc.loss_mode = LossMode::l1;
  return train(generate_shapes({"sphere", "cone"}, 2, 64, 1), c, tc).checkpoint;
}

}  // namespace

// --- xyz ---------------------------------------------------------------------------

TEST(Xyz, RoundTripWithinPrintedPrecision) {
  Rng rng(1);
  const PointCloud c = random_cloud(rng, 100);
  const fs::path dir = scratch_dir("xyz");
  write_xyz(c, dir / "c.xyz");
  const PointCloud back = read_xyz(dir / "c.xyz");
  ASSERT_EQ(back.size(), 100u);
  for (std::size_t i = 0; i < 300; ++i) EXPECT_LT(std::abs(back.flat()[i] - c.flat()[i]), 1e-8);
  EXPECT_EQ(format_xyz(back), format_xyz(c));
}

TEST(Xyz, CommentsAndErrors) {
  const PointCloud c = parse_xyz("# header\n# more\n1 2 3\n\n4.5 -1e-3 0\n");
  EXPECT_EQ(c, PointCloud({{1, 2, 3}, {4.5, -1e-3, 0}}));
  try {
    parse_xyz("# h\n1 2 3\n1.0 2.0\n");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
  EXPECT_THROW(parse_xyz("1 2 x\n"), ParseError);
  EXPECT_THROW(parse_xyz("1 2 3 7\n"), ParseError);
  EXPECT_EQ(parse_xyz("1 2 3 7\n", true), PointCloud({{1, 2, 3}}));
}

// --- datasets ------------------------------------------------------------------------

TEST(Dataset, SphereOnUnitSphere) {
  Rng rng(2);
  const PointCloud s = sample_shape("sphere", 500, rng);
  const Point3 c = geometry::centroid(s);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(std::sqrt(ref::dist2(s[i], c)), 1.0, 1e-9);
  EXPECT_THROW(sample_shape("teapot", 10, rng), ArgumentError);
}

TEST(Dataset, AllKindsNormalised) {
  for (const auto& kind : shape_kinds()) {
    Rng rng(3);
    const PointCloud s = sample_shape(kind, 256, rng);
    ASSERT_EQ(s.size(), 256u);
    double max_abs = 0.0;
    for (double v : s.flat()) max_abs = std::max(max_abs, std::abs(v));
    EXPECT_NEAR(max_abs, 1.0, 1e-12) << kind;
  }
}

TEST(Dataset, GenerationIsByteDeterministic) {
  const fs::path a = scratch_dir("gen_a"), b = scratch_dir("gen_b");
  generate_dataset(shape_kinds(), 8, 256, 42, a);
  generate_dataset(shape_kinds(), 8, 256, 42, b);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    EXPECT_EQ(slurp(e.path()), slurp(b / e.path().filename())) << e.path();
    if (e.path().extension() == ".xyz") {
      ++files;
      const std::string text = slurp(e.path());
      EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 256);
    }
  }
  EXPECT_EQ(files, 8u);
  const Dataset loaded = load_dataset(a);
  EXPECT_EQ(loaded.size(), 8u);
  EXPECT_EQ(loaded.points_per_shape(), 256u);
  EXPECT_EQ(loaded.shapes[1].category, "cube");
}

TEST(Dataset, IngestShapeNetPart) {
  const fs::path root = scratch_dir("ingest");
  fs::create_directories(root / "chair");
  fs::create_directories(root / "lamp");
  Rng rng(4);
  {
    std::ofstream big(root / "chair" / "a.pts");
    for (int i = 0; i < 4000; ++i) big << rng.uniform() << ' ' << rng.uniform() << ' ' << rng.uniform() << " 3\n";
    std::ofstream small(root / "lamp" / "b.txt");
    for (int i = 0; i < 100; ++i) small << rng.uniform() << ' ' << rng.uniform() << ' ' << rng.uniform() << '\n';
    std::ofstream bad(root / "lamp" / "broken.txt");
    bad << "not a point\n";
  }
  const Dataset d = ingest_shapenet_part(root, 2048, 1);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.shapes[0].category, "chair");
  EXPECT_EQ(d.shapes[0].cloud.size(), 2048u);
  EXPECT_EQ(d.shapes[1].category, "lamp");
  EXPECT_EQ(d.shapes[1].cloud.size(), 2048u);
  EXPECT_THROW(ingest_shapenet_part(scratch_dir("ingest_empty"), 2048, 1), ArgumentError);
}

// --- checkpoints -------------------------------------------------------------------------

TEST(Checkpoint, RoundTripPreservesForwardAndEval) {
  const Checkpoint ck = small_checkpoint();
  const fs::path dir = scratch_dir("ckpt");
  save_checkpoint(ck, dir / "a.spcn");
  const Checkpoint back = load_checkpoint(dir / "a.spcn");
  EXPECT_EQ(encode_checkpoint(back), encode_checkpoint(ck));
  EXPECT_EQ(back.nets[0].config, ck.nets[0].config);
  EXPECT_EQ(back.meta.loss_mode, LossMode::l1);

  const Dataset data = generate_shapes({"sphere", "cone"}, 2, 64, 1);
  EXPECT_EQ(format_report_csv(evaluate(ck, data, {1, 1, 1}, true)),
            format_report_csv(evaluate(back, data, {1, 1, 1}, true)));
}

TEST(Checkpoint, QuantisationKeepsForwardClose) {
  Checkpoint ck = small_checkpoint();
  Network& net = ck.nets[0];
  for (auto& [name, t] : net.params)
    for (auto& v : t.mutable_values()) v += 1e-9;  // off the float grid
  const Dataset data = generate_shapes({"sphere"}, 1, 64, 2);
  const auto split = geometry::viewpoint_split(data.shapes[0].cloud, {1, 1, 1}, 0.5);
  const PointCloud before = complete_cloud(net, split.partial);
  const Checkpoint back = decode_checkpoint(encode_checkpoint(ck));
  const PointCloud after = complete_cloud(back.nets[0], split.partial);
  EXPECT_LT(rel_error(after.flat(), before.flat()), 1e-6);
}

TEST(Checkpoint, LayoutHeader) {
  const auto bytes = encode_checkpoint(small_checkpoint());
  ASSERT_GT(bytes.size(), 12u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "SPCN");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5] | bytes[6] | bytes[7], 0);
}

TEST(Checkpoint, CorruptionIsFormatError) {
  const auto good = encode_checkpoint(small_checkpoint());
  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), FormatError);

  auto v2 = good;
  v2[4] = 2;
  try {
    decode_checkpoint(v2);
    FAIL() << "expected a version error";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos) << e.what();
  }

  for (std::size_t cut : {std::size_t{3}, std::size_t{10}, good.size() / 2, good.size() - 1}) {
    const std::vector<std::uint8_t> truncated(good.begin(), good.begin() + static_cast<long>(cut));
    EXPECT_THROW(decode_checkpoint(truncated), FormatError) << cut;
  }
  auto trailing = good;
  trailing.push_back(0);
  EXPECT_THROW(decode_checkpoint(trailing), FormatError);
}

TEST(Checkpoint, FailedLoadLeavesNothingBehind) {
  const fs::path dir = scratch_dir("ckpt_v2");
  auto bytes = encode_checkpoint(small_checkpoint());
  bytes[4] = 2;
  {
    std::ofstream out(dir / "v2.spcn", std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  Checkpoint target = small_checkpoint();
  const auto before = encode_checkpoint(target);
  EXPECT_THROW(target = load_checkpoint(dir / "v2.spcn"), FormatError);
  EXPECT_EQ(encode_checkpoint(target), before);
  EXPECT_THROW(load_checkpoint(dir / "missing.spcn"), std::runtime_error);
}
