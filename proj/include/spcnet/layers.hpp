#pragma once

// Neural building blocks. Every block comes as a declare_* function that
// lists its parameters and a forward function that reads them back by the
// same prefix; widths are taken from the parameter shapes at run time.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "spcnet/geometry.hpp"
#include "spcnet/params.hpp"
#include "spcnet/tensor.hpp"

namespace spcnet::layers {

/// Forward-pass state shared by all layers of one network evaluation.
struct Context {
  Mode mode = Mode::eval;
  NormState* norms = nullptr;
  std::uint64_t sample_seed = 0;  // random point sampling, when enabled
};

struct LayerSpec {
  std::vector<std::size_t> dims;
  bool use_bn = true;
  bool final_activation = false;
};

/// Nonlinearity applied to edge responses in adaptconv/edgeconv.
inline constexpr double kEdgeSlope = 0.2;

// --- shared MLP -------------------------------------------------------------

void declare_shared_mlp(ParamDecls& decls, const std::string& prefix, std::size_t in_width, const LayerSpec& spec);
/// Per-point linear -> batch_norm -> relu stack; the last layer skips norm and
/// activation unless spec.final_activation is set.
Tensor shared_mlp(const Tensor& x, const LayerSpec& spec, const ParamSet& params, const std::string& prefix,
                  Context& ctx);
/// Same stack, returning every layer's output.
std::vector<Tensor> shared_mlp_layers(const Tensor& x, const LayerSpec& spec, const ParamSet& params,
                                      const std::string& prefix, Context& ctx);

// --- graph convolutions -----------------------------------------------------

enum class ConvKind { adapt, edge };

/// Kernel generator g: 6 -> hidden -> out_width * 2 * in_width.
void declare_adaptconv(ParamDecls& decls, const std::string& prefix, std::size_t in_width, std::size_t out_width,
                       std::size_t hidden);

/// Adaptive graph convolution. For every edge (i, j) the generator maps
/// [x_i, x_j - x_i] to out_width kernels of length 2*in_width, each is
/// dotted with [f_i, f_j - f_i], passed through a leaky relu and max-pooled
/// over the neighbours of i. Differentiable in coordinates, features and
/// parameters.
Tensor adaptconv(const Tensor& coords, const Tensor& feats, const NeighborGraph& graph, const ParamSet& params,
                 const std::string& prefix);
/// Bipartite form: centres and their features on one cloud, neighbour
/// indices into a second (support) cloud.
Tensor adaptconv(const Tensor& center_coords, const Tensor& center_feats, const Tensor& support_coords,
                 const Tensor& support_feats, const NeighborGraph& graph, const ParamSet& params,
                 const std::string& prefix);

void declare_edgeconv(ParamDecls& decls, const std::string& prefix, std::size_t in_width, std::size_t out_width);
/// Fixed-kernel edge convolution, leaky(theta . [f_i, f_j - f_i]) max-pooled
/// over neighbours. Coordinates only define the graph.
Tensor edgeconv(const Tensor& coords, const Tensor& feats, const NeighborGraph& graph, const ParamSet& params,
                const std::string& prefix);
/// Bipartite form: neighbour indices point into support_feats.
Tensor edgeconv_bipartite(const Tensor& center_feats, const Tensor& support_feats, const NeighborGraph& graph,
                          const ParamSet& params, const std::string& prefix);

void declare_graph_conv(ParamDecls& decls, ConvKind kind, const std::string& prefix, std::size_t in_width,
                        std::size_t out_width, std::size_t hidden);

struct Pooled {
  Tensor coords;
  Tensor feats;
  std::vector<std::size_t> idx;  // fps selection into the input cloud
};

/// FPS down to pool_n points, then one graph convolution per kept point over
/// its k nearest neighbours in the input cloud.
Pooled graph_pool(const Tensor& coords, const Tensor& feats, std::size_t pool_n, std::size_t k,
                  const ParamSet& params, const std::string& prefix, ConvKind kind = ConvKind::adapt);

// --- interpolation and aggregation ---------------------------------------------

inline constexpr double kInterpGuard = 1e-8;

/// Inverse-distance weighted average of the k nearest support features,
/// w_j = 1 / (d_j + 1e-8), normalised.
Tensor interpolate_up(const Tensor& query_coords, const Tensor& support_coords, const Tensor& support_feats,
                      std::size_t k = 3);

void declare_aggregate(ParamDecls& decls, const std::string& prefix, std::size_t width, std::size_t prev_width,
                       std::size_t out_width);
/// linear([feats_i, prev_feats[nearest(points_i, prev_points)]]).
Tensor aggregate_prev(const Tensor& points, const Tensor& feats, const Tensor& prev_points, const Tensor& prev_feats,
                      const ParamSet& params, const std::string& prefix);

// --- VMLP -----------------------------------------------------------------------

enum class VmlpKind { vmlp, pointnet_mlp, one_subnet };

struct VmlpSpec {
  VmlpKind kind = VmlpKind::vmlp;
  std::vector<std::size_t> subnet_dims{16, 32, 64, 64, 128};
  std::size_t subnet_out = 32;   // width of each sub-net's adjusted global vector
  std::size_t global_width = 128;
  std::size_t kernel_hidden = 16;
  std::size_t knn_k = 16;
  bool use_bn = true;
};

void declare_vmlp(ParamDecls& decls, const std::string& prefix, const VmlpSpec& spec);

struct VmlpOutput {
  Tensor pointwise;              // [n, global_width]
  std::vector<Tensor> globals;   // per sub-net adjusted global vector [1, subnet_out]
  std::vector<Tensor> pooled;    // per sub-net concatenated max-pools, before adjustment
};

VmlpOutput vmlp(const Tensor& points, const ParamSet& params, const std::string& prefix, const VmlpSpec& spec,
                Context& ctx);

// --- folding decoder ---------------------------------------------------------------

struct FoldSpec {
  std::vector<std::size_t> hidden{256, 128};
  std::size_t grid_count = 16;
  double grid_r = 0.05;
  bool use_bn = true;
};

/// Grid codes for `replicas` copies: entries of a G x G lattice over
/// [-r, r]^2 (G*G = grid_count) in row-major order; a single replica uses (0,0).
std::vector<std::array<double, 2>> grid_codes(std::size_t replicas, std::size_t grid_count, double r);

void declare_fold(ParamDecls& decls, const std::string& prefix, std::size_t feat_width, const FoldSpec& spec);
/// Name of the fold head's final (displacement) layer.
std::string fold_head_prefix(const std::string& prefix, const FoldSpec& spec);

/// Replicates each coarse point `replicas` times and adds an MLP displacement
/// of [grid code, point feature, coarse point]. Row c*m + i is replica c of
/// point i.
Tensor fold_decode(const Tensor& coarse_points, const Tensor& point_feats, std::size_t replicas,
                   const ParamSet& params, const std::string& prefix, const FoldSpec& spec, Context& ctx);

}  // namespace spcnet::layers
