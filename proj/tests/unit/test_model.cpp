#include <gtest/gtest.h>

#include "spcnet/errors.hpp"
#include "spcnet/gradcheck.hpp"
#include "spcnet/model.hpp"
#include "spcnet/training.hpp"
#include "test_support.hpp"

using namespace spcnet;
using namespace testing_support;

namespace {

std::vector<double> values(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

ModelConfig tiny(std::size_t total = 64) {
  ModelConfig c = ModelConfig::for_points(total, 0.5);
  c.width_scale = 0.0625;
  c.knn_k = 4;
  c.kernel_hidden = 4;
  return c;
}

StageOutputs run(const ModelConfig& cfg, const ParamSet& p, const Tensor& partial, Mode mode = Mode::train,
                 std::uint64_t sample_seed = 0) {
  NormState norms = init_norms(cfg);
  layers::Context ctx{mode, &norms, sample_seed};
  return spcnet_forward(partial, p, cfg, ctx);
}

std::vector<std::size_t> counts(const StageOutputs& out) {
  std::vector<std::size_t> c;
  for (const auto& s : out.stages) c.push_back(s.rows());
  return c;
}

}  // namespace

TEST(ModelConfig, CountsFor2048Points) {
  ModelConfig c = ModelConfig::for_points(2048, 0.5);
  EXPECT_EQ(c.partial_count, 1024u);
  EXPECT_EQ(c.missing_count, 1024u);
  EXPECT_EQ(c.coarse_count(), 64u);
  EXPECT_EQ(c.stage_input_count(1), 256u);
  EXPECT_EQ(c.stage_input_count(2), 1024u);
  EXPECT_EQ(c.stage_partial_level(0), 2u);
  EXPECT_EQ(c.stage_partial_level(1), 1u);
  EXPECT_EQ(c.stage_partial_level(2), 0u);
  EXPECT_NO_THROW(c.validate());
}

TEST(ModelConfig, PartialOverrides) {
  ModelConfig c = ModelConfig::for_points(2048, 0.5);
  c.partial_override = PartialOverride::pnk_pn;
  EXPECT_EQ(c.stage_partial_level(1), 0u);
  EXPECT_EQ(c.coarse_partial_level(), 2u);
  c.partial_override = PartialOverride::pnkk_pn;
  EXPECT_EQ(c.stage_partial_level(0), 0u);
  EXPECT_EQ(c.stage_partial_level(1), 1u);
  EXPECT_EQ(c.coarse_partial_level(), 0u);
}

TEST(ModelConfig, ValidationErrors) {
  ModelConfig c = ModelConfig::for_points(2048, 0.5);
  c.upsample = {4, 4};
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig::for_points(2048, 0.5);
  c.grid_count = 15;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig::for_points(2048, 0.5);
  c.partial_count = 1000;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig::for_points(2048, 0.5);
  c.upsample = {8, 4, 1};
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(ModelConfig::for_points(100, 1.0), ConfigError);
}

TEST(ModelConfig, TextRoundTrip) {
  ModelConfig c = ModelConfig::for_points(256, 0.25);
  c.conv_kind = layers::ConvKind::edge;
  c.vmlp_kind = layers::VmlpKind::one_subnet;
  c.sampling = SamplingKind::rps;
  c.use_aggregation = false;
  c.width_scale = 0.3;
  c.loss_mode = LossMode::l2;
  c.partial_override = PartialOverride::pnkk_pn;
  EXPECT_EQ(ModelConfig::from_text(c.to_text()), c);
  EXPECT_THROW(c.set("no_such_key", "1"), ConfigError);
  EXPECT_THROW(c.set("K", "four"), ConfigError);
  c.set("width_scale", "toy");
  EXPECT_EQ(c.width_scale, kToyWidthScale);
  EXPECT_EQ(parse_loss_mode("4L"), LossMode::l4);
  EXPECT_EQ(to_string(LossMode::l1), "1l");
}

TEST(Model, PipelineCountsAt2048Points) {
  ModelConfig c = ModelConfig::for_points(2048, 0.5);
  c.width_scale = 0.0625;
  Rng rng(1);
  const ParamSet p = init_params(c, 1);
  const auto out = run(c, p, random_cloud(rng, 1024).to_tensor());
  EXPECT_EQ(counts(out), (std::vector<std::size_t>{64, 256, 1024, 1024}));
  EXPECT_EQ(out.handoff_feats.size(), 3u);
}

TEST(Model, SingleScmCarriesTwoStages) {
  ModelConfig c = tiny(256);
  c.scm_count = 1;
  c.upsample = {16};
  Rng rng(2);
  const auto out = run(c, init_params(c, 2), random_cloud(rng, 128).to_tensor());
  EXPECT_EQ(counts(out), (std::vector<std::size_t>{8, 128}));
}

TEST(Model, RandomConfigsKeepCountBookkeeping) {
  Rng rng(3);
  int checked = 0;
  while (checked < 12) {
    ModelConfig c = tiny();
    c.K = rng.below(2) == 0 ? 2 : 4;
    c.scm_count = 1 + rng.below(3);
    c.upsample.clear();
    std::size_t prod = 1;
    for (std::size_t s = 0; s < c.scm_count; ++s) {
      const std::size_t choices[3] = {1, c.K, c.K * c.K};
      c.upsample.push_back(choices[rng.below(3)]);
      prod *= c.upsample.back();
    }
    if (prod > c.K * c.K) continue;
    c.use_aggregation = rng.below(2) == 0;
    c.validate();
    const auto out = run(c, init_params(c, rng.next()), random_cloud(rng, c.partial_count).to_tensor());
    ASSERT_EQ(out.stages.size(), c.scm_count + 1);
    EXPECT_EQ(out.coarse().rows(), c.coarse_count());
    for (std::size_t s = 0; s < c.scm_count; ++s) EXPECT_EQ(out.stages[s + 1].rows(), out.stages[s].rows() * c.upsample[s]);
    EXPECT_EQ(out.final_stage().rows(), c.missing_count);
    ++checked;
  }
}

TEST(Model, DeterministicForward) {
  const ModelConfig c = tiny();
  Rng rng(4);
  const ParamSet p = init_params(c, 5);
  const Tensor x = random_cloud(rng, 32).to_tensor();
  const auto a = run(c, p, x), b = run(c, p, x);
  for (std::size_t s = 0; s < a.stages.size(); ++s) EXPECT_EQ(values(a.stages[s]), values(b.stages[s]));
}

TEST(Model, RandomSamplingDependsOnSampleSeed) {
  ModelConfig c = tiny();
  c.sampling = SamplingKind::rps;
  Rng rng(5);
  const ParamSet p = init_params(c, 5);
  const Tensor x = random_cloud(rng, 32).to_tensor();
  EXPECT_EQ(values(run(c, p, x, Mode::train, 7).final_stage()), values(run(c, p, x, Mode::train, 7).final_stage()));
  EXPECT_NE(values(run(c, p, x, Mode::train, 7).final_stage()), values(run(c, p, x, Mode::train, 8).final_stage()));
}

TEST(Model, WrongPartialCountIsConfigError) {
  const ModelConfig c = tiny();
  Rng rng(6);
  EXPECT_THROW(run(c, init_params(c, 1), random_cloud(rng, 30).to_tensor()), ConfigError);
}

TEST(Model, ZeroFoldHeadsReplicateCoarseThroughChain) {
  for (bool agg : {true, false}) {
    ModelConfig c = tiny(128);
    c.use_aggregation = agg;
    Rng rng(7);
    ParamSet p = init_params(c, 9);
    zero_fold_heads(p, c);
    const auto out = run(c, p, random_cloud(rng, 64).to_tensor());
    Tensor expect = out.coarse();
    for (std::size_t s = 0; s < c.scm_count; ++s) {
      std::vector<std::size_t> tile;
      for (std::size_t r = 0; r < c.upsample[s]; ++r)
        for (std::size_t i = 0; i < expect.rows(); ++i) tile.push_back(i);
      expect = gather_rows(expect, tile);
      EXPECT_EQ(values(out.stages[s + 1]), values(expect)) << "stage " << s + 1;
    }
  }
}

TEST(CoarseStage, PermutationInvariantAndZeroDecoder) {
  const ModelConfig c = tiny();
  Rng rng(8);
  ParamSet p = init_params(c, 3);
  NormState norms = init_norms(c);
  layers::Context ctx{Mode::eval, &norms};
  const PointCloud pts = random_cloud(rng, 8);
  std::vector<std::size_t> perm{3, 1, 7, 0, 2, 6, 5, 4};
  EXPECT_EQ(values(coarse_stage(pts.to_tensor(), p, c, ctx)),
            values(coarse_stage(pts.select(perm).to_tensor(), p, c, ctx)));

  for (auto& v : p.at("coarse.fc2.weight").mutable_values()) v = 0.0;
  auto bias = p.at("coarse.fc2.bias").mutable_values();
  for (std::size_t i = 0; i < bias.size(); ++i) bias[i] = 0.1 * static_cast<double>(i % 3);
  const Tensor y = coarse_stage(pts.to_tensor(), p, c, ctx);
  for (std::size_t r = 0; r < y.rows(); ++r)
    for (std::size_t a = 0; a < 3; ++a) EXPECT_EQ(y.at(r, a), 0.1 * static_cast<double>(a));
  EXPECT_THROW(coarse_stage(random_cloud(rng, 1).to_tensor(), p, c, ctx), ArgumentError);
}

TEST(Acm, CountsAndRowContract) {
  ModelConfig c = tiny();
  Rng rng(9);
  const ParamSet p = init_params(c, 4);
  NormState norms = init_norms(c);
  layers::Context ctx{Mode::train, &norms};
  // SCM2 widths: global feature of the configured width.
  const std::size_t G = c.width(128);
  const Tensor partial = random_cloud(rng, 8).to_tensor();
  const Tensor missing = random_cloud(rng, 8).to_tensor();
  const Tensor whole = concat({partial, missing}, 0);
  const Tensor feat = random_tensor(rng, {16, G});
  EXPECT_EQ(acm_forward(whole, missing, feat, 2, p, "scm2.acm", c, ctx).rows(), 16u);
  EXPECT_EQ(acm_forward(whole, missing, feat, 1, p, "scm2.acm", c, ctx).rows(), 8u);
  const Tensor shuffled = concat({missing, partial}, 0);
  EXPECT_THROW(acm_forward(shuffled, missing, feat, 2, p, "scm2.acm", c, ctx), ContractError);
}

TEST(Scm, HandOffContract) {
  const ModelConfig c = tiny();
  Rng rng(10);
  const ParamSet p = init_params(c, 4);
  NormState norms = init_norms(c);
  layers::Context ctx{Mode::train, &norms};
  const Tensor partial = random_cloud(rng, 8).to_tensor();
  const Tensor coarse = random_cloud(rng, c.coarse_count()).to_tensor();
  const ScmResult first = scm_forward(partial, coarse, std::nullopt, 0, p, c, ctx);
  EXPECT_EQ(first.refined.rows(), c.coarse_count() * 4);
  EXPECT_EQ(first.handoff.points.rows(), 8 + c.coarse_count());
  EXPECT_THROW(scm_forward(partial, first.refined, std::nullopt, 1, p, c, ctx), ContractError);
  EXPECT_THROW(scm_forward(partial, coarse, first.handoff, 0, p, c, ctx), ContractError);
}

// K = 4 row-major codes are collinear, so folded replicas tie exactly under knn and
// the loss jumps; batch norm over 32 rows kinks every ~1e-6. Neither is checkable.
TEST(Model, FullLossGradientCheck) {
  ModelConfig c = tiny();
  c.K = 2;
  c.upsample = {2, 2, 1};
  c.use_bn = false;
  Rng rng(11);
  for (int trial = 0; trial < 3; ++trial) {
    ParamSet p = init_params(c, rng.next());
    const PointCloud partial = random_cloud(rng, 32), missing = random_cloud(rng, 32);
    const StageTargets targets = downsample_targets(missing, c.K);
    const auto r = finite_diff_check(
        [&](const ParamSet& q) {
          NormState norms = init_norms(c);
          layers::Context ctx{Mode::train, &norms};
          return stepwise_loss(spcnet_forward(partial.to_tensor(), q, c, ctx), targets, LossWeights{});
        },
        p, kink_aware_check(3, 1e-4));
    EXPECT_LT(r.max_rel_error, 1e-3) << " " << describe(r);
  }
}
