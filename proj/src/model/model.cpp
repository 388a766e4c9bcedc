#include "spcnet/model.hpp"

#include <algorithm>

#include "spcnet/errors.hpp"
#include "spcnet/geometry.hpp"

namespace spcnet {

namespace {

using layers::ConvKind;
using layers::LayerSpec;

struct Widths {
  std::vector<std::size_t> coarse_enc;
  std::size_t coarse_hidden;
  layers::VmlpSpec vmlp;
  std::size_t acm0, acm1, acm2, local;
  layers::FoldSpec fold;
};

Widths widths(const ModelConfig& c) {
  Widths w;
  w.coarse_enc = {c.width(64), c.width(128)};
  w.coarse_hidden = c.width(256);
  w.vmlp.kind = c.vmlp_kind;
  w.vmlp.subnet_dims.clear();
  for (std::size_t d : {16, 32, 64, 64, 128}) w.vmlp.subnet_dims.push_back(c.width(d));
  w.vmlp.subnet_out = c.width(32);
  w.vmlp.global_width = c.width(128);
  w.vmlp.kernel_hidden = c.kernel_hidden;
  w.vmlp.knn_k = c.knn_k;
  w.vmlp.use_bn = c.use_bn;
  w.acm0 = c.width(64);
  w.acm1 = c.width(128);
  w.acm2 = c.width(256);
  w.local = c.width(128);
  w.fold.hidden = {c.width(256), c.width(128)};
  w.fold.grid_count = c.grid_count;
  w.fold.grid_r = c.grid_r;
  w.fold.use_bn = c.use_bn;
  return w;
}

Tensor graph_conv(ConvKind kind, const Tensor& coords, const Tensor& feats, const NeighborGraph& graph,
                  const ParamSet& params, const std::string& prefix) {
  return kind == ConvKind::adapt ? layers::adaptconv(coords, feats, graph, params, prefix)
                                 : layers::edgeconv(coords, feats, graph, params, prefix);
}

NeighborGraph self_graph(const Tensor& coords, std::size_t k) {
  const PointCloud cloud = PointCloud::from_tensor(coords);
  return geometry::knn(cloud, std::min(k, cloud.size() - 1));
}

}  // namespace

std::string scm_prefix(std::size_t stage) { return "scm" + std::to_string(stage + 1); }

ParamDecls declare_model(const ModelConfig& config) {
  config.validate();
  const Widths w = widths(config);
  ParamDecls d;
  layers::declare_shared_mlp(d, "coarse.enc", 3, {w.coarse_enc, config.use_bn, true});
  d.weight("coarse.fc1.weight", w.coarse_enc.back(), w.coarse_hidden);
  d.bias("coarse.fc1.bias", w.coarse_hidden);
  d.weight("coarse.fc2.weight", w.coarse_hidden, config.coarse_count() * 3);
  d.bias("coarse.fc2.bias", config.coarse_count() * 3);

  const std::size_t G = w.vmlp.global_width;
  const std::size_t H = config.kernel_hidden;
  for (std::size_t s = 0; s < config.scm_count; ++s) {
    const std::string p = scm_prefix(s);
    layers::declare_vmlp(d, p + ".vmlp", w.vmlp);
    if (s > 0 && config.use_aggregation) layers::declare_aggregate(d, p + ".agg", G, G, G);
    const std::string a = p + ".acm";
    layers::declare_graph_conv(d, config.conv_kind, a + ".conv1", G, w.acm0, H);
    layers::declare_graph_conv(d, config.conv_kind, a + ".pool1", w.acm0, w.acm1, H);
    layers::declare_edgeconv(d, a + ".conv2", w.acm1, w.acm1);
    layers::declare_graph_conv(d, config.conv_kind, a + ".pool2", w.acm1, w.acm2, H);
    layers::declare_shared_mlp(d, a + ".mlp3", w.acm2, {{w.acm2}, config.use_bn, true});
    layers::declare_shared_mlp(d, a + ".fuse", w.acm0 + w.acm1 + 2 * w.acm2, {{w.local}, config.use_bn, true});
    layers::declare_fold(d, a + ".fold", w.local, w.fold);
  }
  return d;
}

ParamSet init_params(const ModelConfig& config, std::uint64_t seed) { return materialize(declare_model(config), seed); }

NormState init_norms(const ModelConfig& config) { return materialize_norms(declare_model(config)); }

Tensor coarse_stage(const Tensor& partial_down2, const ParamSet& params, const ModelConfig& config,
                    layers::Context& ctx) {
  if (partial_down2.rank() != 2 || partial_down2.cols() != 3) {
    throw DimensionError("coarse_stage: expected [n,3] points, got " + shape_string(partial_down2.shape()));
  }
  if (partial_down2.rows() < 2) throw ArgumentError("coarse_stage: needs at least two input points");
  const Widths w = widths(config);
  const Tensor h = layers::shared_mlp(partial_down2, {w.coarse_enc, config.use_bn, true}, params, "coarse.enc", ctx);
  const Tensor code = reshape(reduce_max_rows(h), {1, w.coarse_enc.back()});
  const Tensor hidden =
      activation(linear(code, params.at("coarse.fc1.weight"), params.at("coarse.fc1.bias")), Activation::relu());
  const Tensor flat = linear(hidden, params.at("coarse.fc2.weight"), params.at("coarse.fc2.bias"));
  return reshape(flat, {config.coarse_count(), 3});
}

Tensor acm_forward(const Tensor& whole, const Tensor& missing, const Tensor& pointwise_global, std::size_t upsample,
                   const ParamSet& params, const std::string& prefix, const ModelConfig& config, layers::Context& ctx) {
  const std::size_t n = whole.rows();
  const std::size_t m = missing.rows();
  if (m > n) throw ContractError("acm_forward: missing block larger than the whole cloud");
  {
    const auto wv = whole.values();
    const auto mv = missing.values();
    if (!std::equal(mv.begin(), mv.end(), wv.end() - static_cast<std::ptrdiff_t>(mv.size()))) {
      throw ContractError("acm_forward: the whole cloud does not end with the missing-part rows");
    }
  }
  if (n < 4) throw ArgumentError("acm_forward: needs at least 4 points");
  const Widths w = widths(config);
  const std::size_t k = config.knn_k;

  const Tensor e1 = graph_conv(config.conv_kind, whole, pointwise_global, self_graph(whole, k), params,
                               prefix + ".conv1");
  const layers::Pooled p1 = layers::graph_pool(whole, e1, n / 2, k, params, prefix + ".pool1", config.conv_kind);
  const Tensor e2 = layers::edgeconv(p1.coords, p1.feats, self_graph(p1.coords, k), params, prefix + ".conv2");
  const std::size_t n1 = p1.coords.rows();
  const layers::Pooled p2 =
      layers::graph_pool(p1.coords, e2, std::max<std::size_t>(1, n1 / 2), k, params, prefix + ".pool2",
                         config.conv_kind);
  const Tensor e3 = layers::shared_mlp(p2.feats, {{w.acm2}, config.use_bn, true}, params, prefix + ".mlp3", ctx);
  const Tensor code = reduce_max_rows(e3);

  const Tensor up1 = layers::interpolate_up(whole, p1.coords, e2, std::min<std::size_t>(3, n1));
  const Tensor up2 = layers::interpolate_up(whole, p2.coords, e3, std::min<std::size_t>(3, p2.coords.rows()));
  const Tensor local = layers::shared_mlp(concat({e1, up1, up2, repeat_rows(code, n)}, 1),
                                          {{w.local}, config.use_bn, true}, params, prefix + ".fuse", ctx);
  const Tensor tail = slice_rows(local, n - m, n);
  return layers::fold_decode(missing, tail, upsample, params, prefix + ".fold", w.fold, ctx);
}

ScmResult scm_forward(const Tensor& partial, const Tensor& coarse, const std::optional<Handoff>& prev,
                      std::size_t stage, const ParamSet& params, const ModelConfig& config, layers::Context& ctx) {
  if (stage >= config.scm_count) throw ArgumentError("scm_forward: stage index out of range");
  const bool wants_prev = stage > 0 && config.use_aggregation;
  if (wants_prev && !prev) throw ContractError("scm_forward: SCM " + std::to_string(stage + 1) + " needs a hand-off");
  if (!wants_prev && prev) throw ContractError("scm_forward: unexpected hand-off feature");
  const std::string p = scm_prefix(stage);
  const Tensor whole = concat({partial, coarse}, 0);
  Tensor feat = layers::vmlp(whole, params, p + ".vmlp", widths(config).vmlp, ctx).pointwise;
  if (prev) feat = layers::aggregate_prev(whole, feat, prev->points, prev->feats, params, p + ".agg");
  ScmResult r;
  r.refined = acm_forward(whole, coarse, feat, config.upsample[stage], params, p + ".acm", config, ctx);
  r.handoff = {whole, feat};
  return r;
}

StageOutputs spcnet_forward(const Tensor& partial, const ParamSet& params, const ModelConfig& config,
                            layers::Context& ctx) {
  if (partial.rank() != 2 || partial.cols() != 3 || partial.rows() != config.partial_count) {
    throw ConfigError("spcnet_forward: expected " + std::to_string(config.partial_count) + " partial points, got " +
                      shape_string(partial.shape()));
  }
  const std::size_t K = config.K;
  if (config.partial_count % (K * K) != 0) throw ConfigError("partial count is not divisible by K^2");

  // P_N, P_{N/K}, P_{N/K^2}, each sampled from the previous one.
  std::vector<Tensor> levels{partial};
  PointCloud cloud = PointCloud::from_tensor(partial);
  Rng rng(derive_seed(ctx.sample_seed, "sampling"));
  for (std::size_t level = 1; level <= 2; ++level) {
    const std::size_t count = config.partial_count_at(level);
    const auto idx = config.sampling == SamplingKind::fps ? geometry::fps(cloud, count)
                                                          : geometry::rps(cloud, count, rng);
    levels.push_back(gather_rows(levels.back(), idx));
    cloud = cloud.select(idx);
  }

  StageOutputs out;
  out.stages.push_back(coarse_stage(levels[config.coarse_partial_level()], params, config, ctx));
  std::optional<Handoff> prev;
  for (std::size_t s = 0; s < config.scm_count; ++s) {
    ScmResult r = scm_forward(levels[config.stage_partial_level(s)], out.stages.back(),
                              config.use_aggregation ? prev : std::nullopt, s, params, config, ctx);
    out.stages.push_back(r.refined);
    out.handoff_feats.push_back(r.handoff.feats);
    prev = std::move(r.handoff);
  }
  return out;
}

void zero_fold_heads(ParamSet& params, const ModelConfig& config) {
  const Widths w = widths(config);
  for (std::size_t s = 0; s < config.scm_count; ++s) {
    const std::string head = layers::fold_head_prefix(scm_prefix(s) + ".acm.fold", w.fold);
    for (const char* role : {".weight", ".bias"}) {
      auto v = params.at(head + role).mutable_values();
      std::fill(v.begin(), v.end(), 0.0);
    }
  }
}

}  // namespace spcnet
