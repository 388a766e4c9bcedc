#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "spcnet/checkpoint.hpp"
#include "spcnet/errors.hpp"
#include "spcnet/gradcheck.hpp"
#include "spcnet/training.hpp"
#include "test_support.hpp"

using namespace spcnet;
using namespace testing_support;

namespace {

ModelConfig tiny(std::size_t total = 64, double ratio = 0.5) {
  ModelConfig c = ModelConfig::for_points(total, ratio);
  c.width_scale = 0.0625;
  c.knn_k = 4;
  c.kernel_hidden = 4;
  return c;
}

Tensor perturbed(Rng& rng, const PointCloud& c, double amount) {
  std::vector<double> v(c.flat().begin(), c.flat().end());
  for (auto& x : v) x += rng.uniform(-amount, amount);
  return Tensor({c.size(), 3}, v);
}

}  // namespace

// --- chamfer ------------------------------------------------------------------------

TEST(Chamfer, UnitValues) {
  const Tensor a({1, 3}, {0, 0, 0}), b({1, 3}, {1, 0, 0});
  EXPECT_EQ(chamfer(a, b).item(), 2.0);
  Rng rng(1);
  const Tensor c = random_cloud(rng, 50).to_tensor();
  EXPECT_EQ(chamfer(c, c).item(), 0.0);
  // A = {0, 2}, B = {1}: A->B (1 + 1)/2, B->A 1.
  EXPECT_EQ(chamfer(Tensor({2, 3}, {0, 0, 0, 2, 0, 0}), Tensor({1, 3}, {1, 0, 0})).item(), 2.0);
  EXPECT_THROW(chamfer(Tensor::zeros({0, 3}), a), ArgumentError);
}

TEST(Chamfer, MatchesNaiveDoubleLoopAndSymmetry) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const PointCloud a = random_cloud(rng, 1 + rng.below(100)), b = random_cloud(rng, 1 + rng.below(100));
    const double ab = chamfer(a.to_tensor(), b.to_tensor()).item();
    const double ba = chamfer(b.to_tensor(), a.to_tensor()).item();
    EXPECT_EQ(ab, ba);
    EXPECT_GE(ab, 0.0);
    EXPECT_LT(std::abs(ab - ref::chamfer(to_ref(a), to_ref(b))), 1e-12 * std::abs(ab));
    EXPECT_EQ(chamfer_value(a, b), ab);
  }
}

TEST(Chamfer, PermutationInvariant) {
  Rng rng(3);
  const PointCloud a = random_cloud(rng, 40), b = random_cloud(rng, 30);
  std::vector<std::size_t> perm(40);
  for (std::size_t i = 0; i < 40; ++i) perm[i] = (i * 7) % 40;
  EXPECT_NEAR(chamfer_value(a.select(perm), b), chamfer_value(a, b), 1e-15);
}

TEST(Chamfer, GradientMatchesFiniteDifferences) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    ParamSet p;
    add_param(p, "a", random_cloud(rng, 2 + rng.below(30)).to_tensor());
    add_param(p, "b", random_cloud(rng, 2 + rng.below(30)).to_tensor());
    const auto r = finite_diff_check([](const ParamSet& q) { return chamfer(q.at("a"), q.at("b")); }, p);
    EXPECT_LT(r.max_rel_error, 1e-5) << trial << " " << describe(r);
  }
}

// --- targets and stepwise loss ---------------------------------------------------------

TEST(DownsampleTargets, CountsAndNesting) {
  Rng rng(5);
  const PointCloud m = random_cloud(rng, 1024);
  const StageTargets t = downsample_targets(m, 4);
  EXPECT_EQ(t.by_k.size(), 256u);
  EXPECT_EQ(t.by_kk.size(), 64u);
  EXPECT_EQ(t.by_k, m.select(t.by_k_idx));
  EXPECT_EQ(t.by_kk, m.select(t.by_kk_idx));
  const std::set<std::size_t> mid(t.by_k_idx.begin(), t.by_k_idx.end());
  for (auto i : t.by_kk_idx) EXPECT_EQ(mid.count(i), 1u);

  const StageTargets one = downsample_targets(m, 1);
  EXPECT_EQ(std::set<std::size_t>(one.by_k_idx.begin(), one.by_k_idx.end()).size(), 1024u);
  EXPECT_EQ(std::set<std::size_t>(one.by_kk_idx.begin(), one.by_kk_idx.end()).size(), 1024u);
  EXPECT_THROW(downsample_targets(random_cloud(rng, 30), 4), ArgumentError);
  EXPECT_THROW(t.for_count(100), ContractError);
}

TEST(StepwiseLoss, PerfectMaskedAndSummed) {
  Rng rng(6);
  const StageTargets t = downsample_targets(random_cloud(rng, 64), 4);
  StageOutputs perfect;
  perfect.stages = {t.by_kk.to_tensor(), t.by_k.to_tensor(), t.full.to_tensor(), t.full.to_tensor()};
  EXPECT_EQ(stepwise_loss(perfect, t, LossWeights{}).item(), 0.0);

  StageOutputs noisy;
  for (const auto* c : {&t.by_kk, &t.by_k, &t.full, &t.full}) noisy.stages.push_back(perturbed(rng, *c, 0.1));
  double terms[4];
  const PointCloud* tg[4] = {&t.by_kk, &t.by_k, &t.full, &t.full};
  for (int s = 0; s < 4; ++s) terms[s] = ref::chamfer(to_ref(PointCloud::from_tensor(noisy.stages[s])), to_ref(*tg[s]));

  LossWeights only_first;
  only_first.alpha = {1, 0, 0, 0};
  EXPECT_NEAR(stepwise_loss(noisy, t, only_first).item(), terms[0], 1e-14);
  EXPECT_NEAR(stepwise_loss(noisy, t, LossWeights{}).item(), terms[0] + terms[1] + terms[2] + terms[3], 1e-13);
  LossWeights w;
  w.alpha = {0.5, 2, 3, 0.25};
  EXPECT_NEAR(stepwise_loss(noisy, t, w).item(), 0.5 * terms[0] + 2 * terms[1] + 3 * terms[2] + 0.25 * terms[3],
              1e-13);

  StageOutputs wrong = noisy;
  wrong.stages[1] = random_cloud(rng, 10).to_tensor();
  EXPECT_THROW(stepwise_loss(wrong, t, LossWeights{}), ContractError);
}

TEST(StepwiseLoss, StageWeightsForShortChains) {
  LossWeights w;
  w.alpha = {1, 2, 3, 4};
  EXPECT_EQ(stage_weights(4, w), (std::vector<double>{1, 2, 3, 4}));
  EXPECT_EQ(stage_weights(3, w), (std::vector<double>{1, 2, 4}));
  EXPECT_EQ(stage_weights(2, w), (std::vector<double>{1, 4}));
}

TEST(StepwiseLoss, GradientCheck) {
  Rng rng(7);
  const StageTargets t = downsample_targets(random_cloud(rng, 16), 2);
  for (int trial = 0; trial < 20; ++trial) {
    ParamSet p;
    add_param(p, "s0", perturbed(rng, t.by_kk, 0.2));
    add_param(p, "s1", perturbed(rng, t.by_k, 0.2));
    add_param(p, "s2", perturbed(rng, t.full, 0.2));
    add_param(p, "s3", perturbed(rng, t.full, 0.2));
    const auto r = finite_diff_check(
        [&](const ParamSet& q) {
          StageOutputs o;
          o.stages = {q.at("s0"), q.at("s1"), q.at("s2"), q.at("s3")};
          return stepwise_loss(o, t, LossWeights{});
        },
        p);
    EXPECT_LT(r.max_rel_error, 1e-4) << " " << describe(r);
  }
}

TEST(LossWeights, Validation) {
  LossWeights w;
  EXPECT_NO_THROW(w.validate());
  w.alpha = {0, 0, 0, 0};
  w.beta = {0, 0};
  EXPECT_THROW(w.validate(), ConfigError);
  w.alpha = {-1, 1, 1, 1};
  EXPECT_THROW(w.validate(), ConfigError);
}

// --- cycle loss -------------------------------------------------------------------------

class CycleLossTest : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng rng(8);
    cfg = tiny();
    params = init_params(cfg, 3);
    norms = init_norms(cfg);
    partial = random_cloud(rng, 32).to_tensor();
    missing = random_cloud(rng, 32).to_tensor();
  }
  CycleLoss loss(LossMode mode, const LossWeights& w = {}) {
    const NetRef net{&params, &cfg, &norms};
    return cycle_total_loss(net, net, partial, missing, w, mode, Mode::train, 11);
  }
  ModelConfig cfg;
  ParamSet params;
  NormState norms;
  Tensor partial, missing;
};

TEST_F(CycleLossTest, ModeArithmetic) {
  const LossWeights w;
  const CycleLoss l1 = loss(LossMode::l1, w);
  EXPECT_EQ(l1.total.item(), l1.terms[0].item());
  EXPECT_FALSE(l1.terms[1].defined());

  const CycleLoss l2 = loss(LossMode::l2, w);
  EXPECT_EQ(l2.total.item(), w.beta[0] * (l2.terms[0].item() + l2.terms[1].item()));
  EXPECT_EQ(l2.terms[0].item(), l1.terms[0].item());
  EXPECT_FALSE(l2.terms[2].defined());

  const CycleLoss l4 = loss(LossMode::l4, w);
  for (const auto& t : l4.terms) ASSERT_TRUE(t.defined());
  const double sum = w.beta[0] * (l4.terms[0].item() + l4.terms[1].item()) +
                     w.beta[1] * (l4.terms[2].item() + l4.terms[3].item());
  EXPECT_NEAR(l4.total.item(), sum, 1e-12);

  LossWeights no_cycle;
  no_cycle.beta = {0.7, 0.0};
  const CycleLoss l4b = loss(LossMode::l4, no_cycle);
  const CycleLoss l2b = loss(LossMode::l2, no_cycle);
  EXPECT_EQ(l4b.total.item(), l2b.total.item());
}

TEST_F(CycleLossTest, SharedNetworkNeedsSymmetricSizes) {
  const ModelConfig asym = tiny(64, 0.25);
  const ParamSet p = init_params(asym, 1);
  NormState n = init_norms(asym);
  Rng rng(9);
  const NetRef net{&p, &asym, &n};
  const Tensor part = random_cloud(rng, 48).to_tensor(), miss = random_cloud(rng, 16).to_tensor();
  EXPECT_NO_THROW(cycle_total_loss(net, net, part, miss, {}, LossMode::l1, Mode::train, 0));
  EXPECT_THROW(cycle_total_loss(net, net, part, miss, {}, LossMode::l2, Mode::train, 0), ConfigError);
}

TEST_F(CycleLossTest, GradientReachesParametersThroughCyclePasses) {
  params.zero_grad();
  LossWeights only_cycle;
  only_cycle.beta = {0.0, 1.0};
  backward(loss(LossMode::l4, only_cycle).total);
  double mass = 0.0;
  for (const auto& [name, t] : params)
    for (double g : t.grad()) mass += std::abs(g);
  EXPECT_GT(mass, 0.0);
}

// --- training loop ------------------------------------------------------------------------

TEST(Train, ConfigValidation) {
  TrainConfig tc;
  tc.epochs = 0;
  EXPECT_THROW(tc.validate(), ConfigError);
  tc.epochs = 1;
  tc.batch_size = 0;
  EXPECT_THROW(tc.validate(), ConfigError);
  tc.batch_size = 1;
  for (double d : {0.0, -0.5, 1.5}) {
    tc.lr_decay = d;
    EXPECT_THROW(tc.validate(), ConfigError) << d;
  }
  EXPECT_THROW(train(Dataset{}, tiny(), TrainConfig{}), ArgumentError);
}

TEST(Train, LrDecayStartsAtFullRate) {
  const Dataset data = generate_shapes({"sphere"}, 1, 64, 3);
  TrainConfig tc;
  tc.epochs = 1;
  tc.loss_mode = LossMode::l1;
  auto params_after = [&](double decay, std::size_t epochs) {
    tc.lr_decay = decay;
    tc.epochs = epochs;
    const auto r = train(data, tiny(), tc);
    std::vector<double> out;
    for (const auto& [name, t] : r.checkpoint.nets[0].params) out.insert(out.end(), t.values().begin(), t.values().end());
    return out;
  };
  EXPECT_EQ(params_after(0.1, 1), params_after(1.0, 1));
  EXPECT_NE(params_after(0.1, 2), params_after(1.0, 2));
}

TEST(Train, DeterministicCheckpointAndTrace) {
  const Dataset data = generate_shapes({"sphere"}, 1, 64, 3);
  TrainConfig tc;
  tc.epochs = 1;
  tc.seed = 4;
  tc.loss_mode = LossMode::l4;
  const TrainResult a = train(data, tiny(), tc);
  const TrainResult b = train(data, tiny(), tc);
  EXPECT_EQ(encode_checkpoint(a.checkpoint), encode_checkpoint(b.checkpoint));
  ASSERT_EQ(a.trace.size(), 1u);
  EXPECT_EQ(format_trace_line(a.trace[0], tc.loss_mode), format_trace_line(b.trace[0], tc.loss_mode));
  EXPECT_EQ(a.checkpoint.nets.size(), 1u);
  EXPECT_EQ(a.checkpoint.nets[0].adam.t, 1u);
}

TEST(Train, JointRegimeForAsymmetricRatios) {
  const Dataset data = generate_shapes({"cube", "cone"}, 2, 128, 5);
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 2;
  tc.missing_ratio = 0.25;
  tc.loss_mode = LossMode::l4;
  const TrainResult r = train(data, tiny(), tc);
  ASSERT_EQ(r.checkpoint.nets.size(), 2u);
  EXPECT_EQ(r.checkpoint.nets[0].config.missing_count, 32u);
  EXPECT_EQ(r.checkpoint.nets[1].config.missing_count, 96u);
  EXPECT_NE(r.checkpoint.nets[0].params.total_values(), 0u);
  tc.loss_mode = LossMode::l1;
  EXPECT_EQ(train(data, tiny(), tc).checkpoint.nets.size(), 1u);
}

TEST(Train, TraceLineFormat) {
  EpochRecord r;
  r.epoch = 3;
  r.loss = {0.5, 0.25, 0.125, 1.0};
  r.total = 0.75;
  EXPECT_EQ(format_trace_line(r, LossMode::l1), "3,0.5,0.75");
  EXPECT_EQ(format_trace_line(r, LossMode::l4), "3,0.5,0.25,0.125,1,0.75");
}

// --- evaluation --------------------------------------------------------------------------

TEST(Evaluate, ReportConsistencyAndCsv) {
  const Dataset data = generate_shapes({"sphere", "cube", "torus"}, 5, 64, 6);
  TrainConfig tc;
  tc.epochs = 1;
  tc.loss_mode = LossMode::l1;
  const TrainResult r = train(data, tiny(), tc);
  const EvalReport rep = evaluate(r.checkpoint, data, {1, 1, 1}, true);
  ASSERT_EQ(rep.rows.size(), 3u);
  EXPECT_EQ(rep.rows[0].category, "cube");
  double weighted = 0.0;
  std::size_t n = 0;
  for (const auto& row : rep.rows) {
    weighted += row.cd_x1000 * static_cast<double>(row.count);
    n += row.count;
  }
  EXPECT_EQ(n, 5u);
  EXPECT_NEAR(rep.overall.cd_x1000, weighted / static_cast<double>(n), 1e-12);
  const std::string csv = format_report_csv(rep);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "category,count,cd_coarse,cd_mid,cd_fine,cd_final");
  EXPECT_EQ(format_report_csv(evaluate(r.checkpoint, data, {1, 1, 1}, false)).substr(0, 24),
            "category,count,cd_x1000\n");

  const Dataset other = generate_shapes({"sphere"}, 1, 128, 6);
  EXPECT_THROW(evaluate(r.checkpoint, other, {1, 1, 1}), ConfigError);
}

TEST(Evaluate, CompleteKeepsPartialVerbatim) {
  const Dataset data = generate_shapes({"cylinder"}, 1, 64, 7);
  TrainConfig tc;
  tc.epochs = 1;
  tc.loss_mode = LossMode::l1;
  const TrainResult r = train(data, tiny(), tc);
  const auto split = geometry::viewpoint_split(data.shapes[0].cloud, {1, 1, 1}, 0.5);
  StageOutputs stages;
  const PointCloud out = complete_cloud(r.checkpoint.nets[0], split.partial, &stages);
  ASSERT_EQ(out.size(), 64u);
  for (std::size_t i = 0; i < 32; ++i) EXPECT_EQ(out[i], split.partial[i]);
  EXPECT_EQ(stages.stages.size(), 4u);
}
