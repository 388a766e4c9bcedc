#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "spcnet/checkpoint.hpp"
#include "spcnet/dataset.hpp"
#include "spcnet/geometry.hpp"
#include "spcnet/model.hpp"

namespace spcnet {

// --- losses -------------------------------------------------------------------

/// Mean squared nearest-neighbour distance from A to B plus from B to A.
/// Differentiable in both [n,3] arguments.
Tensor chamfer(const Tensor& a, const Tensor& b);
double chamfer_value(const PointCloud& a, const PointCloud& b);

struct LossWeights {
  std::array<double, 4> alpha{1.0, 1.0, 1.0, 1.0};
  std::array<double, 2> beta{1.0, 0.5};
  void validate() const;
};

/// Ground truths at the three resolutions; coarser ones are FPS subsets of
/// finer ones.
struct StageTargets {
  PointCloud full;   // P_M
  PointCloud by_k;   // P_{M/K}
  PointCloud by_kk;  // P_{M/K^2}
  std::vector<std::size_t> by_k_idx;   // into full
  std::vector<std::size_t> by_kk_idx;  // into full

  /// The target whose size is `count`; ContractError if none matches.
  const PointCloud& for_count(std::size_t count) const;
};

StageTargets downsample_targets(const PointCloud& missing, std::size_t K);

/// Weight of each stage: alpha1 on the coarse stage, alpha4 on the last,
/// alpha2 and alpha3 on the stages between, in order.
std::vector<double> stage_weights(std::size_t stage_count, const LossWeights& weights);

/// Weighted sum over stages of chamfer(stage, matching-size target).
Tensor stepwise_loss(const StageOutputs& outputs, const StageTargets& targets, const LossWeights& weights);
/// Chamfer of every stage against its matching-size target.
std::vector<double> stage_chamfers(const StageOutputs& outputs, const StageTargets& targets);

/// A network in use: parameters plus where its norm statistics live.
struct NetRef {
  const ParamSet* params;
  const ModelConfig* config;
  NormState* norms;
};

struct CycleLoss {
  Tensor total;
  /// Loss(P*_M,P_M), Loss(P*_N,P_N), Loss(P**_N,P_N), Loss(P**_M,P_M);
  /// undefined when the loss mode does not use the term.
  std::array<Tensor, 4> terms;
  StageOutputs direct;  // forward pass that produced P*_M
};

/// Direct and cycle losses. `forward` maps P_N to P_M, `reverse` maps P_M
/// to P_N; pass the same network twice for the shared regime.
CycleLoss cycle_total_loss(const NetRef& forward, const NetRef& reverse, const Tensor& partial, const Tensor& missing,
                           const LossWeights& weights, LossMode mode, Mode run_mode, std::uint64_t sample_seed);

// --- training -----------------------------------------------------------------

struct TrainConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 24;
  double lr = 1e-4;
  /// Learning rate at the last epoch as a fraction of lr, reached geometrically.
  /// 1 keeps it constant.
  double lr_decay = 1.0;
  std::uint64_t seed = 0;
  LossMode loss_mode = LossMode::l4;
  double missing_ratio = 0.5;
  Point3 eval_viewpoint{1.0, 1.0, 1.0};
  LossWeights weights;
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::array<double, 4> loss{};  // per-epoch means of the four terms
  double total = 0.0;
  double cd_final = 0.0;  // mean chamfer(P*_M, P_M)
};

/// "epoch,loss1[,loss2,loss3,loss4],total" with the terms the mode uses.
std::string format_trace_line(const EpochRecord& record, LossMode mode);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochRecord> trace;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Uses `model` for every architectural switch; point counts, ratio and
/// loss mode come from the data and `train`. Unequal partial and missing
/// counts with a cycle loss train two networks jointly.
TrainResult train(const Dataset& data, const ModelConfig& model, const TrainConfig& train,
                  const EpochCallback& on_epoch = {});

// --- evaluation ---------------------------------------------------------------

struct EvalRow {
  std::string category;
  std::size_t count = 0;
  double cd_x1000 = 0.0;
  std::array<double, 4> stage_x1000{};  // coarse, mid, fine, final against P_M
};

struct EvalReport {
  std::vector<EvalRow> rows;  // categories in name order
  EvalRow overall;
  bool stagewise = false;
};

/// Completes every shape from the split at `viewpoint` with nets[0] and
/// scores P_N + P*_M against P_N + P_M, scaled by 1000.
EvalReport evaluate(const Checkpoint& ckpt, const Dataset& data, const Point3& viewpoint, bool stagewise = false);
std::string format_report_csv(const EvalReport& report);

/// P_N followed by the predicted missing part.
PointCloud complete_cloud(const Network& net, const PointCloud& partial, StageOutputs* stages = nullptr);

}  // namespace spcnet
