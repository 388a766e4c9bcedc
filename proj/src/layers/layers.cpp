#include <algorithm>
#include <cmath>

#include "spcnet/errors.hpp"
#include "spcnet/layers.hpp"

namespace spcnet::layers {

namespace {

std::string layer_name(const std::string& prefix, std::size_t i) { return prefix + ".l" + std::to_string(i); }

bool layer_has_norm_act(const LayerSpec& spec, std::size_t i) {
  return i + 1 < spec.dims.size() || spec.final_activation;
}

RunningStats& norm_stats(Context& ctx, const std::string& name, std::size_t width, RunningStats& scratch) {
  if (ctx.norms != nullptr) return ctx.norms->at(name);
  if (ctx.mode == Mode::eval) throw ContractError("eval-mode forward without norm statistics (" + name + ")");
  scratch = RunningStats::fresh(width);
  return scratch;
}

}  // namespace

void declare_shared_mlp(ParamDecls& decls, const std::string& prefix, std::size_t in_width, const LayerSpec& spec) {
  if (spec.dims.empty()) throw ConfigError("shared MLP '" + prefix + "' has no layers");
  std::size_t width = in_width;
  for (std::size_t i = 0; i < spec.dims.size(); ++i) {
    if (spec.dims[i] == 0) throw ConfigError("shared MLP '" + prefix + "' has a zero-width layer");
    const std::string name = layer_name(prefix, i);
    decls.weight(name + ".weight", width, spec.dims[i]);
    decls.bias(name + ".bias", spec.dims[i]);
    if (spec.use_bn && layer_has_norm_act(spec, i)) decls.norm(name + ".bn", spec.dims[i]);
    width = spec.dims[i];
  }
}

std::vector<Tensor> shared_mlp_layers(const Tensor& x, const LayerSpec& spec, const ParamSet& params,
                                      const std::string& prefix, Context& ctx) {
  std::vector<Tensor> outputs;
  Tensor h = x;
  for (std::size_t i = 0; i < spec.dims.size(); ++i) {
    const std::string name = layer_name(prefix, i);
    const Tensor& w = params.at(name + ".weight");
    if (h.rank() != 2 || w.rows() != h.cols() || w.cols() != spec.dims[i]) {
      throw DimensionError("shared MLP '" + name + "': input " + shape_string(h.shape()) +
                           " does not chain with weight " + shape_string(w.shape()));
    }
    h = linear(h, w, params.at(name + ".bias"));
    if (layer_has_norm_act(spec, i)) {
      if (spec.use_bn) {
        RunningStats scratch;
        RunningStats& stats = norm_stats(ctx, name + ".bn", spec.dims[i], scratch);
        h = batch_norm(h, params.at(name + ".bn.gamma"), params.at(name + ".bn.beta"), stats, ctx.mode);
      }
      h = activation(h, Activation::relu());
    }
    outputs.push_back(h);
  }
  return outputs;
}

Tensor shared_mlp(const Tensor& x, const LayerSpec& spec, const ParamSet& params, const std::string& prefix,
                  Context& ctx) {
  return shared_mlp_layers(x, spec, params, prefix, ctx).back();
}

void declare_graph_conv(ParamDecls& decls, ConvKind kind, const std::string& prefix, std::size_t in_width,
                        std::size_t out_width, std::size_t hidden) {
  if (kind == ConvKind::adapt) {
    declare_adaptconv(decls, prefix, in_width, out_width, hidden);
  } else {
    declare_edgeconv(decls, prefix, in_width, out_width);
  }
}

Pooled graph_pool(const Tensor& coords, const Tensor& feats, std::size_t pool_n, std::size_t k,
                  const ParamSet& params, const std::string& prefix, ConvKind kind) {
  const std::size_t n = coords.rows();
  if (pool_n < 1 || pool_n > n) {
    throw ArgumentError("graph_pool: cannot pool " + std::to_string(n) + " points to " + std::to_string(pool_n));
  }
  const PointCloud cloud = PointCloud::from_tensor(coords);
  Pooled out;
  out.idx = geometry::fps(cloud, pool_n);
  out.coords = gather_rows(coords, out.idx);
  const PointCloud pooled_cloud = cloud.select(out.idx);
  const NeighborGraph graph = geometry::knn(pooled_cloud, cloud, std::min(k, n));
  const Tensor centre_feats = gather_rows(feats, out.idx);
  out.feats = kind == ConvKind::adapt ? adaptconv(out.coords, centre_feats, coords, feats, graph, params, prefix)
                                      : edgeconv_bipartite(centre_feats, feats, graph, params, prefix);
  return out;
}

void declare_aggregate(ParamDecls& decls, const std::string& prefix, std::size_t width, std::size_t prev_width,
                       std::size_t out_width) {
  decls.weight(prefix + ".weight", width + prev_width, out_width);
  decls.bias(prefix + ".bias", out_width);
}

Tensor aggregate_prev(const Tensor& points, const Tensor& feats, const Tensor& prev_points, const Tensor& prev_feats,
                      const ParamSet& params, const std::string& prefix) {
  if (prev_points.rows() == 0) throw ArgumentError("aggregate_prev: empty previous cloud");
  if (prev_feats.rows() != prev_points.rows() || feats.rows() != points.rows()) {
    throw DimensionError("aggregate_prev: features do not match their clouds");
  }
  const auto idx = geometry::nearest_index(PointCloud::from_tensor(points), PointCloud::from_tensor(prev_points));
  const Tensor merged = concat({feats, gather_rows(prev_feats, idx)}, 1);
  return linear(merged, params.at(prefix + ".weight"), params.at(prefix + ".bias"));
}

// --- VMLP ---------------------------------------------------------------------

namespace {

struct VmlpLayout {
  std::size_t subnets;
  std::vector<std::size_t> dims;
  std::size_t adjust_out;
  std::size_t pooled_width;
  std::size_t conv_in;
};

VmlpLayout vmlp_layout(const VmlpSpec& spec) {
  if (spec.subnet_dims.size() < 4) {
    throw ConfigError("VMLP sub-net needs at least four layers, got " + std::to_string(spec.subnet_dims.size()));
  }
  VmlpLayout l;
  const std::size_t mult = spec.kind == VmlpKind::one_subnet ? 3 : 1;
  l.subnets = spec.kind == VmlpKind::one_subnet ? 1 : 3;
  for (auto d : spec.subnet_dims) l.dims.push_back(d * mult);
  l.adjust_out = spec.subnet_out * mult;
  if (spec.kind == VmlpKind::pointnet_mlp) {
    l.pooled_width = l.dims.back();
  } else {
    l.pooled_width = 0;
    for (std::size_t i = l.dims.size() - 4; i < l.dims.size(); ++i) l.pooled_width += l.dims[i];
  }
  l.conv_in = spec.kind == VmlpKind::one_subnet ? 3 + l.adjust_out : 3 * (1 + l.adjust_out);
  return l;
}

std::string subnet_name(const std::string& prefix, std::size_t s) { return prefix + ".sub" + std::to_string(s); }

}  // namespace

void declare_vmlp(ParamDecls& decls, const std::string& prefix, const VmlpSpec& spec) {
  const VmlpLayout l = vmlp_layout(spec);
  for (std::size_t s = 0; s < l.subnets; ++s) {
    const std::string name = subnet_name(prefix, s);
    declare_shared_mlp(decls, name + ".mlp", 3, {l.dims, spec.use_bn, true});
    decls.weight(name + ".adjust.weight", l.pooled_width, l.adjust_out);
    decls.bias(name + ".adjust.bias", l.adjust_out);
  }
  declare_adaptconv(decls, prefix + ".conv", l.conv_in, spec.global_width, spec.kernel_hidden);
}

VmlpOutput vmlp(const Tensor& points, const ParamSet& params, const std::string& prefix, const VmlpSpec& spec,
                Context& ctx) {
  const std::size_t n = points.rows();
  if (n < 2) throw ArgumentError("vmlp: needs at least two points");
  const VmlpLayout l = vmlp_layout(spec);
  VmlpOutput out;
  std::vector<Tensor> blocks;
  for (std::size_t s = 0; s < l.subnets; ++s) {
    const std::string name = subnet_name(prefix, s);
    const auto layers = shared_mlp_layers(points, {l.dims, spec.use_bn, true}, params, name + ".mlp", ctx);
    std::vector<Tensor> pools;
    const std::size_t first = spec.kind == VmlpKind::pointnet_mlp ? layers.size() - 1 : layers.size() - 4;
    for (std::size_t i = first; i < layers.size(); ++i) pools.push_back(reduce_max_rows(layers[i]));
    Tensor pooled = pools.size() == 1 ? pools.front() : concat(pools, 0);
    out.pooled.push_back(pooled);
    Tensor global = linear(reshape(pooled, {1, l.pooled_width}), params.at(name + ".adjust.weight"),
                           params.at(name + ".adjust.bias"));
    out.globals.push_back(global);
    const Tensor coord = spec.kind == VmlpKind::one_subnet ? points : slice_cols(points, s, s + 1);
    blocks.push_back(concat({coord, repeat_rows(global, n)}, 1));
  }
  const Tensor conv_in = blocks.size() == 1 ? blocks.front() : concat(blocks, 1);
  const PointCloud cloud = PointCloud::from_tensor(points);
  const NeighborGraph graph = geometry::knn(cloud, std::min(spec.knn_k, n - 1));
  out.pointwise = adaptconv(points, conv_in, graph, params, prefix + ".conv");
  return out;
}

// --- folding decoder -----------------------------------------------------------

std::vector<std::array<double, 2>> grid_codes(std::size_t replicas, std::size_t grid_count, double r) {
  if (replicas < 1) throw ArgumentError("grid_codes: need at least one replica");
  if (!(r > 0.0)) throw ArgumentError("grid_codes: grid radius must be positive");
  if (replicas == 1) return {{0.0, 0.0}};
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(grid_count))));
  if (side * side != grid_count) throw ConfigError("grid_count must be a perfect square");
  if (replicas > grid_count) {
    throw ConfigError("upsample factor " + std::to_string(replicas) + " exceeds grid_count " +
                      std::to_string(grid_count));
  }
  std::vector<double> lin(side, 0.0);
  if (side > 1) {
    for (std::size_t a = 0; a < side; ++a)
      lin[a] = -r + 2.0 * r * static_cast<double>(a) / static_cast<double>(side - 1);
  }
  std::vector<std::array<double, 2>> codes;
  for (std::size_t c = 0; c < replicas; ++c) codes.push_back({lin[c / side], lin[c % side]});
  return codes;
}

void declare_fold(ParamDecls& decls, const std::string& prefix, std::size_t feat_width, const FoldSpec& spec) {
  auto dims = spec.hidden;
  dims.push_back(3);
  declare_shared_mlp(decls, prefix + ".mlp", 2 + feat_width + 3, {dims, spec.use_bn, false});
}

std::string fold_head_prefix(const std::string& prefix, const FoldSpec& spec) {
  return layer_name(prefix + ".mlp", spec.hidden.size());
}

Tensor fold_decode(const Tensor& coarse_points, const Tensor& point_feats, std::size_t replicas,
                   const ParamSet& params, const std::string& prefix, const FoldSpec& spec, Context& ctx) {
  const std::size_t m = coarse_points.rows();
  if (coarse_points.cols() != 3 || point_feats.rows() != m) {
    throw DimensionError("fold_decode: points " + shape_string(coarse_points.shape()) + " and features " +
                         shape_string(point_feats.shape()) + " disagree");
  }
  const auto codes = grid_codes(replicas, spec.grid_count, spec.grid_r);
  std::vector<std::size_t> tile(replicas * m);
  std::vector<double> code_values(replicas * m * 2);
  for (std::size_t c = 0; c < replicas; ++c)
    for (std::size_t i = 0; i < m; ++i) {
      tile[c * m + i] = i;
      code_values[(c * m + i) * 2] = codes[c][0];
      code_values[(c * m + i) * 2 + 1] = codes[c][1];
    }
  const Tensor tiled_points = gather_rows(coarse_points, tile);
  const Tensor input =
      concat({Tensor({replicas * m, 2}, std::move(code_values)), gather_rows(point_feats, tile), tiled_points}, 1);
  auto dims = spec.hidden;
  dims.push_back(3);
  const Tensor displacement = shared_mlp(input, {dims, spec.use_bn, false}, params, prefix + ".mlp", ctx);
  return add(tiled_points, displacement);
}

}  // namespace spcnet::layers
