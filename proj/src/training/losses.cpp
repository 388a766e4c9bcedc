#include <cmath>

#include "spcnet/errors.hpp"
#include "spcnet/kernels.hpp"
#include "spcnet/training.hpp"

namespace spcnet {

namespace {

void check_cloud_tensor(const Tensor& t, const char* what) {
  if (t.rank() != 2 || t.cols() != 3) {
    throw DimensionError(std::string("chamfer: ") + what + " must be [n,3], got " + shape_string(t.shape()));
  }
  if (t.rows() == 0) throw ArgumentError(std::string("chamfer: ") + what + " is empty");
}

}  // namespace

Tensor chamfer(const Tensor& a, const Tensor& b) {
  check_cloud_tensor(a, "first cloud");
  check_cloud_tensor(b, "second cloud");
  const std::size_t na = a.rows(), nb = b.rows();
  std::vector<std::size_t> ab_idx(na), ba_idx(nb);
  std::vector<double> ab_d(na), ba_d(nb);
  kernels::nearest_neighbors(a.values(), b.values(), ab_idx, ab_d);
  kernels::nearest_neighbors(b.values(), a.values(), ba_idx, ba_d);
  double sa = 0.0, sb = 0.0;
  for (double d : ab_d) sa += d;
  for (double d : ba_d) sb += d;
  const double value = sa / static_cast<double>(na) + sb / static_cast<double>(nb);

  auto pa = a.node();
  auto pb = b.node();
  return make_result({}, {value}, {a, b},
                     [pa, pb, ab_idx = std::move(ab_idx), ba_idx = std::move(ba_idx), na, nb](std::span<const double> g) {
                       const auto& av = pa->value;
                       const auto& bv = pb->value;
                       std::span<double> ga, gb;
                       if (pa->requires_grad) ga = pa->grad_buffer();
                       if (pb->requires_grad) gb = pb->grad_buffer();
                       // Each directed term contributes 2 (x - y) / n to x and the negative to y.
                       const double ca = 2.0 * g[0] / static_cast<double>(na);
                       for (std::size_t i = 0; i < na; ++i) {
                         const std::size_t j = ab_idx[i];
                         for (int c = 0; c < 3; ++c) {
                           const double diff = ca * (av[3 * i + c] - bv[3 * j + c]);
                           if (!ga.empty()) ga[3 * i + c] += diff;
                           if (!gb.empty()) gb[3 * j + c] -= diff;
                         }
                       }
                       const double cb = 2.0 * g[0] / static_cast<double>(nb);
                       for (std::size_t j = 0; j < nb; ++j) {
                         const std::size_t i = ba_idx[j];
                         for (int c = 0; c < 3; ++c) {
                           const double diff = cb * (bv[3 * j + c] - av[3 * i + c]);
                           if (!gb.empty()) gb[3 * j + c] += diff;
                           if (!ga.empty()) ga[3 * i + c] -= diff;
                         }
                       }
                     });
}

double chamfer_value(const PointCloud& a, const PointCloud& b) { return chamfer(a.to_tensor(), b.to_tensor()).item(); }

void LossWeights::validate() const {
  bool any = false;
  for (double w : alpha) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and non-negative");
    any = any || w > 0.0;
  }
  for (double w : beta) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and non-negative");
    any = any || w > 0.0;
  }
  if (!any) throw ConfigError("loss weights are all zero");
}

const PointCloud& StageTargets::for_count(std::size_t count) const {
  if (count == full.size()) return full;
  if (count == by_k.size()) return by_k;
  if (count == by_kk.size()) return by_kk;
  throw ContractError("no target of " + std::to_string(count) + " points (have " + std::to_string(full.size()) + ", " +
                      std::to_string(by_k.size()) + ", " + std::to_string(by_kk.size()) + ")");
}

StageTargets downsample_targets(const PointCloud& missing, std::size_t K) {
  if (K < 1 || missing.empty() || missing.size() % (K * K) != 0) {
    throw ArgumentError("downsample_targets: " + std::to_string(missing.size()) +
                        " points are not divisible by K^2 = " + std::to_string(K * K));
  }
  StageTargets t;
  t.full = missing;
  t.by_k_idx = geometry::fps(missing, missing.size() / K);
  t.by_k = missing.select(t.by_k_idx);
  const auto inner = geometry::fps(t.by_k, missing.size() / (K * K));
  for (auto i : inner) t.by_kk_idx.push_back(t.by_k_idx[i]);
  t.by_kk = missing.select(t.by_kk_idx);
  return t;
}

std::vector<double> stage_weights(std::size_t stage_count, const LossWeights& weights) {
  if (stage_count < 2) throw ArgumentError("stage_weights: need the coarse stage and at least one SCM");
  std::vector<double> w(stage_count);
  w.front() = weights.alpha[0];
  w.back() = weights.alpha[3];
  for (std::size_t s = 1; s + 1 < stage_count; ++s) w[s] = weights.alpha[std::min<std::size_t>(s, 2)];
  return w;
}

Tensor stepwise_loss(const StageOutputs& outputs, const StageTargets& targets, const LossWeights& weights) {
  const auto w = stage_weights(outputs.stages.size(), weights);
  Tensor total;
  for (std::size_t s = 0; s < outputs.stages.size(); ++s) {
    const Tensor& stage = outputs.stages[s];
    const Tensor term = scale(chamfer(stage, targets.for_count(stage.rows()).to_tensor()), w[s]);
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

std::vector<double> stage_chamfers(const StageOutputs& outputs, const StageTargets& targets) {
  std::vector<double> out;
  for (const auto& stage : outputs.stages)
    out.push_back(chamfer(stage.detach(), targets.for_count(stage.rows()).to_tensor()).item());
  return out;
}

CycleLoss cycle_total_loss(const NetRef& forward, const NetRef& reverse, const Tensor& partial, const Tensor& missing,
                           const LossWeights& weights, LossMode mode, Mode run_mode, std::uint64_t sample_seed) {
  const ModelConfig& fc = *forward.config;
  if (partial.rows() != fc.partial_count || missing.rows() != fc.missing_count) {
    throw ConfigError("cycle_total_loss: clouds of " + std::to_string(partial.rows()) + "/" +
                      std::to_string(missing.rows()) + " points do not fit a network for " +
                      std::to_string(fc.partial_count) + "/" + std::to_string(fc.missing_count));
  }
  if (mode != LossMode::l1) {
    const ModelConfig& rc = *reverse.config;
    if (rc.partial_count != missing.rows() || rc.missing_count != partial.rows()) {
      throw ConfigError(forward.params == reverse.params
                            ? "cycle_total_loss: a single shared network needs |P_N| = |P_M|"
                            : "cycle_total_loss: reverse network does not map P_M back to P_N");
    }
  }
  auto run = [&](const NetRef& net, const Tensor& input, const char* tag) {
    layers::Context ctx{run_mode, net.norms, derive_seed(sample_seed, tag)};
    return spcnet_forward(input, *net.params, *net.config, ctx);
  };

  const StageTargets to_missing = downsample_targets(PointCloud::from_tensor(missing), fc.K);
  CycleLoss out;
  out.direct = run(forward, partial, "direct-m");
  out.terms[0] = stepwise_loss(out.direct, to_missing, weights);
  if (mode == LossMode::l1) {
    out.total = out.terms[0];
    return out;
  }
  const StageTargets to_partial = downsample_targets(PointCloud::from_tensor(partial), reverse.config->K);
  const StageOutputs back = run(reverse, missing, "direct-n");
  out.terms[1] = stepwise_loss(back, to_partial, weights);
  out.total = scale(add(out.terms[0], out.terms[1]), weights.beta[0]);
  if (mode == LossMode::l2) return out;

  const StageOutputs cycle_n = run(reverse, out.direct.final_stage(), "cycle-n");
  out.terms[2] = stepwise_loss(cycle_n, to_partial, weights);
  const StageOutputs cycle_m = run(forward, back.final_stage(), "cycle-m");
  out.terms[3] = stepwise_loss(cycle_m, to_missing, weights);
  out.total = add(out.total, scale(add(out.terms[2], out.terms[3]), weights.beta[1]));
  return out;
}

}  // namespace spcnet
