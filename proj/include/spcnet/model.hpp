#pragma once

// The stepwise completion network: a coarse decoder followed by up to three
// refinement modules (SCMs), each handing its point-wise feature to the next.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spcnet/layers.hpp"
#include "spcnet/params.hpp"
#include "spcnet/tensor.hpp"

namespace spcnet {

enum class SamplingKind { fps, rps };
enum class LossMode { l1, l2, l4 };
/// Substitutes the full partial cloud for a down-sampled one at one level.
enum class PartialOverride { none, pnk_pn, pnkk_pn };

inline constexpr double kToyWidthScale = 0.25;

struct ModelConfig {
  std::size_t partial_count = 1024;  // N
  std::size_t missing_count = 1024;  // M
  std::size_t K = 4;
  std::size_t scm_count = 3;
  std::vector<std::size_t> upsample{4, 4, 1};
  std::size_t grid_count = 16;
  double grid_r = 0.05;
  std::size_t knn_k = 16;
  layers::ConvKind conv_kind = layers::ConvKind::adapt;
  layers::VmlpKind vmlp_kind = layers::VmlpKind::vmlp;
  bool use_aggregation = true;
  SamplingKind sampling = SamplingKind::fps;
  double width_scale = 1.0;
  LossMode loss_mode = LossMode::l4;
  double missing_ratio = 0.5;
  PartialOverride partial_override = PartialOverride::none;
  std::size_t kernel_hidden = 16;
  bool use_bn = true;

  /// N and M for a cloud of `total` points at `ratio`, M = round(ratio * total).
  static ModelConfig for_points(std::size_t total, double ratio);

  /// Point count produced by the coarse decoder, M / prod(upsample).
  std::size_t coarse_count() const;
  /// Point count entering SCM `stage`.
  std::size_t stage_input_count(std::size_t stage) const;
  /// Down-sampling level (0 = P_N, 1 = P_{N/K}, 2 = P_{N/K^2}) of the
  /// partial cloud paired with SCM `stage`, after any override.
  std::size_t stage_partial_level(std::size_t stage) const;
  std::size_t coarse_partial_level() const;
  std::size_t partial_count_at(std::size_t level) const;
  /// max(1, round(base * width_scale)).
  std::size_t width(std::size_t base) const;

  /// Throws ConfigError on any violated invariant.
  void validate() const;

  /// key=value lines, one per field.
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);
  /// Applies one key=value setting; unknown keys are a ConfigError.
  void set(const std::string& key, const std::string& value);

  bool operator==(const ModelConfig&) const = default;
};

std::string to_string(LossMode mode);
LossMode parse_loss_mode(const std::string& text);

/// Network outputs of one pass. stages[0] is the coarse prediction, then one
/// entry per SCM; the last entry is the predicted missing part.
struct StageOutputs {
  std::vector<Tensor> stages;
  std::vector<Tensor> handoff_feats;  // per SCM, over that SCM's whole cloud

  const Tensor& coarse() const { return stages.front(); }
  const Tensor& final_stage() const { return stages.back(); }
};

/// Feature passed between SCMs, with the cloud it lives on.
struct Handoff {
  Tensor points;
  Tensor feats;
};

struct ScmResult {
  Tensor refined;
  Handoff handoff;
};

ParamDecls declare_model(const ModelConfig& config);
ParamSet init_params(const ModelConfig& config, std::uint64_t seed);
NormState init_norms(const ModelConfig& config);

std::string scm_prefix(std::size_t stage);

/// Shared MLP -> max-pool -> two linear layers -> [coarse_count, 3].
Tensor coarse_stage(const Tensor& partial_down2, const ParamSet& params, const ModelConfig& config,
                    layers::Context& ctx);

/// Adaptive convolution module. `whole` must end with the rows of `missing`.
Tensor acm_forward(const Tensor& whole, const Tensor& missing, const Tensor& pointwise_global, std::size_t upsample,
                   const ParamSet& params, const std::string& prefix, const ModelConfig& config, layers::Context& ctx);

ScmResult scm_forward(const Tensor& partial, const Tensor& coarse, const std::optional<Handoff>& prev,
                      std::size_t stage, const ParamSet& params, const ModelConfig& config, layers::Context& ctx);

/// Full pass from the partial cloud [N,3] to every stage prediction.
StageOutputs spcnet_forward(const Tensor& partial, const ParamSet& params, const ModelConfig& config,
                            layers::Context& ctx);

/// Zeroes the final layer of every fold decoder.
void zero_fold_heads(ParamSet& params, const ModelConfig& config);

}  // namespace spcnet
