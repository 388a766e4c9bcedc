// Fused graph-convolution and interpolation operators with hand-written
// backward passes.

#include <algorithm>
#include <cmath>

#include "spcnet/errors.hpp"
#include "spcnet/kernels.hpp"
#include "spcnet/layers.hpp"

namespace spcnet::layers {

namespace {

using NodePtr = std::shared_ptr<detail::Node>;

double leaky(double x) { return x > 0.0 ? x : kEdgeSlope * x; }
double leaky_grad(double x) { return x > 0.0 ? 1.0 : kEdgeSlope; }

void check_graph(const NeighborGraph& graph, std::size_t centers, std::size_t support, const char* op) {
  if (graph.size() != centers || graph.k == 0) {
    throw DimensionError(std::string(op) + ": graph has " + std::to_string(graph.size()) + " rows for " +
                         std::to_string(centers) + " centre points");
  }
  for (auto j : graph.indices) {
    if (j >= support) throw DimensionError(std::string(op) + ": graph index outside the support cloud");
  }
}

void check_points(const Tensor& t, const char* op) {
  if (t.rank() != 2 || t.cols() != 3) throw DimensionError(std::string(op) + ": coordinates must be [n,3]");
}

// Channel-wise max over each centre's k edge rows; returns the output and the
// winning edge per (centre, channel), lowest neighbour position on ties.
void edge_max(const std::vector<double>& act, std::size_t centers, std::size_t k, std::size_t width,
              std::vector<double>& out, std::vector<std::size_t>& arg) {
  out.assign(centers * width, 0.0);
  arg.assign(centers * width, 0);
  for (std::size_t i = 0; i < centers; ++i) {
    const std::size_t e0 = i * k;
    for (std::size_t c = 0; c < width; ++c) {
      double best = act[e0 * width + c];
      std::size_t best_e = e0;
      for (std::size_t t = 1; t < k; ++t) {
        const double v = act[(e0 + t) * width + c];
        if (v > best) {
          best = v;
          best_e = e0 + t;
        }
      }
      out[i * width + c] = best;
      arg[i * width + c] = best_e;
    }
  }
}

}  // namespace

void declare_adaptconv(ParamDecls& decls, const std::string& prefix, std::size_t in_width, std::size_t out_width,
                       std::size_t hidden) {
  decls.weight(prefix + ".kernel0.weight", 6, hidden);
  decls.bias(prefix + ".kernel0.bias", hidden);
  decls.weight(prefix + ".kernel1.weight", hidden, out_width * 2 * in_width);
  decls.bias(prefix + ".kernel1.bias", out_width * 2 * in_width);
}

Tensor adaptconv(const Tensor& coords, const Tensor& feats, const NeighborGraph& graph, const ParamSet& params,
                 const std::string& prefix) {
  return adaptconv(coords, feats, coords, feats, graph, params, prefix);
}

Tensor adaptconv(const Tensor& center_coords, const Tensor& center_feats, const Tensor& support_coords,
                 const Tensor& support_feats, const NeighborGraph& graph, const ParamSet& params,
                 const std::string& prefix) {
  check_points(center_coords, "adaptconv");
  check_points(support_coords, "adaptconv");
  const std::size_t m = center_coords.rows(), n = support_coords.rows();
  if (center_feats.rank() != 2 || center_feats.rows() != m || support_feats.rank() != 2 ||
      support_feats.rows() != n || center_feats.cols() != support_feats.cols()) {
    throw DimensionError("adaptconv: feature tensors " + shape_string(center_feats.shape()) + " / " +
                         shape_string(support_feats.shape()) + " do not match their clouds");
  }
  check_graph(graph, m, n, "adaptconv");
  const Tensor& w0 = params.at(prefix + ".kernel0.weight");
  const Tensor& b0 = params.at(prefix + ".kernel0.bias");
  const Tensor& w1 = params.at(prefix + ".kernel1.weight");
  const Tensor& b1 = params.at(prefix + ".kernel1.bias");
  const std::size_t D = center_feats.cols();
  const std::size_t H = w0.cols();
  if (w0.rows() != 6 || w1.rows() != H || w1.cols() % (2 * D) != 0) {
    throw DimensionError("adaptconv: kernel generator " + shape_string(w1.shape()) + " does not fit features of width " +
                         std::to_string(D));
  }
  const std::size_t M = w1.cols() / (2 * D);
  const std::size_t k = graph.k;
  const std::size_t E = m * k;
  const std::size_t H1 = H + 1;  // hidden units plus the constant bias unit
  const std::size_t HM = H1 * M;

  const auto qc = center_coords.values();
  const auto sc = support_coords.values();

  // Edge geometry and the generator's hidden layer.
  std::vector<double> dx(E * 6);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t t = 0; t < k; ++t) {
      const std::size_t e = i * k + t, j = graph.indices[e];
      for (int a = 0; a < 3; ++a) {
        dx[e * 6 + a] = qc[3 * i + a];
        dx[e * 6 + 3 + a] = sc[3 * j + a] - qc[3 * i + a];
      }
    }
  std::vector<double> z0(E * H);
  kernels::gemm_nn(dx, w0.values(), z0, E, 6, H);
  const auto b0v = b0.values();
  std::vector<double> z(E * H1);
  for (std::size_t e = 0; e < E; ++e) {
    for (std::size_t h = 0; h < H; ++h) {
      const double v = z0[e * H + h] + b0v[h];
      z0[e * H + h] = v;
      z[e * H1 + h] = leaky(v);
    }
    z[e * H1 + H] = 1.0;
  }

  // <g(dx), [f_i, f_j - f_i]> = sum_h z_h (f_i . (A_h - B_h) + f_j . B_h) where
  // A/B are the centre/difference halves of the generated kernel rows.
  const auto w1v = w1.values();
  const auto b1v = b1.values();
  std::vector<double> cmat(D * HM), bmat(D * HM);
  for (std::size_t h = 0; h < H1; ++h) {
    const double* row = h < H ? &w1v[h * M * 2 * D] : b1v.data();
    for (std::size_t c = 0; c < M; ++c)
      for (std::size_t d = 0; d < D; ++d) {
        const double a = row[c * 2 * D + d], b = row[c * 2 * D + D + d];
        cmat[d * HM + h * M + c] = a - b;
        bmat[d * HM + h * M + c] = b;
      }
  }
  std::vector<double> u(m * HM), v(n * HM);
  kernels::gemm_nn(center_feats.values(), cmat, u, m, D, HM);
  kernels::gemm_nn(support_feats.values(), bmat, v, n, D, HM);

  std::vector<double> pre(E * M, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t t = 0; t < k; ++t) {
      const std::size_t e = i * k + t, j = graph.indices[e];
      double* pe = &pre[e * M];
      for (std::size_t h = 0; h < H1; ++h) {
        const double zh = z[e * H1 + h];
        const double* ui = &u[i * HM + h * M];
        const double* vj = &v[j * HM + h * M];
        for (std::size_t c = 0; c < M; ++c) pe[c] += zh * (ui[c] + vj[c]);
      }
    }
  std::vector<double> act(E * M);
  for (std::size_t t = 0; t < act.size(); ++t) act[t] = leaky(pre[t]);
  std::vector<double> out;
  std::vector<std::size_t> arg;
  edge_max(act, m, k, M, out, arg);

  NodePtr pqc = center_coords.node(), pqf = center_feats.node(), psc = support_coords.node(),
          psf = support_feats.node(), pw0 = w0.node(), pb0 = b0.node(), pw1 = w1.node(), pb1 = b1.node();
  std::vector<std::size_t> nbr = graph.indices;
  return make_result(
      {m, M}, std::move(out), {center_coords, center_feats, support_coords, support_feats, w0, b0, w1, b1},
      [=, dx = std::move(dx), z0 = std::move(z0), z = std::move(z), cmat = std::move(cmat), bmat = std::move(bmat),
       u = std::move(u), v = std::move(v), pre = std::move(pre), arg = std::move(arg),
       nbr = std::move(nbr)](std::span<const double> g) {
        std::vector<double> du(m * HM, 0.0), dv(n * HM, 0.0), dz(E * H1, 0.0);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t c = 0; c < M; ++c) {
            const std::size_t e = arg[i * M + c], j = nbr[e];
            const double dp = g[i * M + c] * leaky_grad(pre[e * M + c]);
            if (dp == 0.0) continue;
            for (std::size_t h = 0; h < H1; ++h) {
              const std::size_t col = h * M + c;
              const double zh = z[e * H1 + h];
              du[i * HM + col] += dp * zh;
              dv[j * HM + col] += dp * zh;
              dz[e * H1 + h] += dp * (u[i * HM + col] + v[j * HM + col]);
            }
          }
        if (pqf->requires_grad) kernels::gemm_nt_acc(du, cmat, pqf->grad_buffer(), m, HM, D);
        if (psf->requires_grad) kernels::gemm_nt_acc(dv, bmat, psf->grad_buffer(), n, HM, D);
        if (pw1->requires_grad || pb1->requires_grad) {
          std::vector<double> dc(D * HM, 0.0), db(D * HM, 0.0);
          kernels::gemm_tn_acc(pqf->value, du, dc, m, D, HM);
          kernels::gemm_tn_acc(psf->value, dv, db, n, D, HM);
          for (std::size_t h = 0; h < H1; ++h) {
            const bool is_bias = h == H;
            if (is_bias ? !pb1->requires_grad : !pw1->requires_grad) continue;
            auto gdst = is_bias ? pb1->grad_buffer() : pw1->grad_buffer();
            double* row = is_bias ? gdst.data() : gdst.data() + h * M * 2 * D;
            for (std::size_t c = 0; c < M; ++c)
              for (std::size_t d = 0; d < D; ++d) {
                const double gc = dc[d * HM + h * M + c];
                row[c * 2 * D + d] += gc;
                row[c * 2 * D + D + d] += db[d * HM + h * M + c] - gc;
              }
          }
        }
        // Back through the generator's hidden layer.
        std::vector<double> dz0(E * H);
        for (std::size_t e = 0; e < E; ++e)
          for (std::size_t h = 0; h < H; ++h) dz0[e * H + h] = dz[e * H1 + h] * leaky_grad(z0[e * H + h]);
        if (pw0->requires_grad) kernels::gemm_tn_acc(dx, dz0, pw0->grad_buffer(), E, 6, H);
        if (pb0->requires_grad) {
          auto gb = pb0->grad_buffer();
          for (std::size_t e = 0; e < E; ++e)
            for (std::size_t h = 0; h < H; ++h) gb[h] += dz0[e * H + h];
        }
        if (pqc->requires_grad || psc->requires_grad) {
          std::vector<double> ddx(E * 6, 0.0);
          kernels::gemm_nt_acc(dz0, pw0->value, ddx, E, H, 6);
          for (std::size_t e = 0; e < E; ++e) {
            const std::size_t i = e / k, j = nbr[e];
            if (pqc->requires_grad) {
              auto gq = pqc->grad_buffer();
              for (int a = 0; a < 3; ++a) gq[3 * i + a] += ddx[e * 6 + a] - ddx[e * 6 + 3 + a];
            }
            if (psc->requires_grad) {
              auto gs = psc->grad_buffer();
              for (int a = 0; a < 3; ++a) gs[3 * j + a] += ddx[e * 6 + 3 + a];
            }
          }
        }
      });
}

void declare_edgeconv(ParamDecls& decls, const std::string& prefix, std::size_t in_width, std::size_t out_width) {
  decls.weight(prefix + ".theta", 2 * in_width, out_width);
}

Tensor edgeconv(const Tensor& coords, const Tensor& feats, const NeighborGraph& graph, const ParamSet& params,
                const std::string& prefix) {
  check_points(coords, "edgeconv");
  if (feats.rank() != 2 || feats.rows() != coords.rows()) {
    throw DimensionError("edgeconv: features " + shape_string(feats.shape()) + " do not match the cloud");
  }
  return edgeconv_bipartite(feats, feats, graph, params, prefix);
}

Tensor edgeconv_bipartite(const Tensor& center_feats, const Tensor& support_feats, const NeighborGraph& graph,
                          const ParamSet& params, const std::string& prefix) {
  if (center_feats.rank() != 2 || support_feats.rank() != 2 || center_feats.cols() != support_feats.cols()) {
    throw DimensionError("edgeconv: feature tensors " + shape_string(center_feats.shape()) + " / " +
                         shape_string(support_feats.shape()) + " are incompatible");
  }
  const std::size_t m = center_feats.rows(), n = support_feats.rows(), D = center_feats.cols();
  check_graph(graph, m, n, "edgeconv");
  const Tensor& theta = params.at(prefix + ".theta");
  if (theta.rows() != 2 * D) {
    throw DimensionError("edgeconv: kernel " + shape_string(theta.shape()) + " does not fit features of width " +
                         std::to_string(D));
  }
  const std::size_t M = theta.cols(), k = graph.k, E = m * k;
  const auto tv = theta.values();
  // theta . [f_i, f_j - f_i] = f_i . (top - bottom) + f_j . bottom
  std::vector<double> tdiff(D * M), tbot(D * M);
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t c = 0; c < M; ++c) {
      tdiff[d * M + c] = tv[d * M + c] - tv[(D + d) * M + c];
      tbot[d * M + c] = tv[(D + d) * M + c];
    }
  std::vector<double> p(m * M), q(n * M);
  kernels::gemm_nn(center_feats.values(), tdiff, p, m, D, M);
  kernels::gemm_nn(support_feats.values(), tbot, q, n, D, M);
  std::vector<double> pre(E * M), act(E * M);
  for (std::size_t e = 0; e < E; ++e) {
    const std::size_t i = e / k, j = graph.indices[e];
    for (std::size_t c = 0; c < M; ++c) {
      pre[e * M + c] = p[i * M + c] + q[j * M + c];
      act[e * M + c] = leaky(pre[e * M + c]);
    }
  }
  std::vector<double> out;
  std::vector<std::size_t> arg;
  edge_max(act, m, k, M, out, arg);

  NodePtr pcf = center_feats.node(), psf = support_feats.node(), pth = theta.node();
  std::vector<std::size_t> nbr = graph.indices;
  return make_result({m, M}, std::move(out), {center_feats, support_feats, theta},
                     [=, tdiff = std::move(tdiff), tbot = std::move(tbot), pre = std::move(pre), arg = std::move(arg),
                      nbr = std::move(nbr)](std::span<const double> g) {
                       std::vector<double> dp(m * M, 0.0), dq(n * M, 0.0);
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t c = 0; c < M; ++c) {
                           const std::size_t e = arg[i * M + c];
                           const double d = g[i * M + c] * leaky_grad(pre[e * M + c]);
                           dp[i * M + c] += d;
                           dq[nbr[e] * M + c] += d;
                         }
                       if (pcf->requires_grad) kernels::gemm_nt_acc(dp, tdiff, pcf->grad_buffer(), m, M, D);
                       if (psf->requires_grad) kernels::gemm_nt_acc(dq, tbot, psf->grad_buffer(), n, M, D);
                       if (pth->requires_grad) {
                         std::vector<double> gdiff(D * M, 0.0), gbot(D * M, 0.0);
                         kernels::gemm_tn_acc(pcf->value, dp, gdiff, m, D, M);
                         kernels::gemm_tn_acc(psf->value, dq, gbot, n, D, M);
                         auto gt = pth->grad_buffer();
                         for (std::size_t d = 0; d < D; ++d)
                           for (std::size_t c = 0; c < M; ++c) {
                             gt[d * M + c] += gdiff[d * M + c];
                             gt[(D + d) * M + c] += gbot[d * M + c] - gdiff[d * M + c];
                           }
                       }
                     });
}

Tensor interpolate_up(const Tensor& query_coords, const Tensor& support_coords, const Tensor& support_feats,
                      std::size_t k) {
  check_points(query_coords, "interpolate_up");
  check_points(support_coords, "interpolate_up");
  const std::size_t m = query_coords.rows(), s = support_coords.rows();
  if (support_feats.rank() != 2 || support_feats.rows() != s) {
    throw DimensionError("interpolate_up: support features " + shape_string(support_feats.shape()) +
                         " do not match the support cloud");
  }
  if (k == 0 || s < k) {
    throw ArgumentError("interpolate_up: need at least k = " + std::to_string(k) + " support points, got " +
                        std::to_string(s));
  }
  const std::size_t D = support_feats.cols();
  const PointCloud qcloud = PointCloud::from_tensor(query_coords);
  const PointCloud scloud = PointCloud::from_tensor(support_coords);
  const NeighborGraph graph = geometry::knn(qcloud, scloud, k);
  const auto qv = query_coords.values(), sv = support_coords.values(), fv = support_feats.values();

  std::vector<double> dist(m * k), weight(m * k), wsum(m, 0.0), out(m * D, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t t = 0; t < k; ++t) {
      const std::size_t j = graph.indices[i * k + t];
      const double d = std::sqrt(kernels::squared_distance(&qv[3 * i], &sv[3 * j]));
      dist[i * k + t] = d;
      weight[i * k + t] = 1.0 / (d + kInterpGuard);
      wsum[i] += weight[i * k + t];
    }
    for (std::size_t t = 0; t < k; ++t) {
      const std::size_t j = graph.indices[i * k + t];
      const double w = weight[i * k + t] / wsum[i];
      for (std::size_t c = 0; c < D; ++c) out[i * D + c] += w * fv[j * D + c];
    }
  }

  NodePtr pq = query_coords.node(), ps = support_coords.node(), pf = support_feats.node();
  std::vector<double> saved_out = out;
  return make_result(
      {m, D}, std::move(out), {query_coords, support_coords, support_feats},
      [=, nbr = graph.indices, dist = std::move(dist), weight = std::move(weight), wsum = std::move(wsum),
       saved_out = std::move(saved_out)](std::span<const double> g) {
        if (pf->requires_grad) {
          auto gf = pf->grad_buffer();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t t = 0; t < k; ++t) {
              const std::size_t j = nbr[i * k + t];
              const double w = weight[i * k + t] / wsum[i];
              for (std::size_t c = 0; c < D; ++c) gf[j * D + c] += w * g[i * D + c];
            }
        }
        if (!pq->requires_grad && !ps->requires_grad) return;
        const auto& qv = pq->value;
        const auto& sv = ps->value;
        const auto& fv = pf->value;
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t t = 0; t < k; ++t) {
            const std::size_t j = nbr[i * k + t];
            const double d = dist[i * k + t];
            if (d == 0.0) continue;  // subgradient 0 at coincident points
            // d out_i / d w_j = (f_j - out_i) / S ; d w_j / d d_j = -w_j^2
            double a = 0.0;
            for (std::size_t c = 0; c < D; ++c) a += g[i * D + c] * (fv[j * D + c] - saved_out[i * D + c]);
            const double w = weight[i * k + t];
            a *= -w * w / wsum[i] / d;
            for (int ax = 0; ax < 3; ++ax) {
              const double diff = qv[3 * i + ax] - sv[3 * j + ax];
              if (pq->requires_grad) pq->grad_buffer()[3 * i + ax] += a * diff;
              if (ps->requires_grad) ps->grad_buffer()[3 * j + ax] -= a * diff;
            }
          }
      });
}

}  // namespace spcnet::layers
