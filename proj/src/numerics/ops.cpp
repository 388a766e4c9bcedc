#include <algorithm>
#include <cmath>

#include "spcnet/errors.hpp"
#include "spcnet/kernels.hpp"
#include "spcnet/tensor.hpp"

namespace spcnet {

namespace {

using NodePtr = std::shared_ptr<detail::Node>;

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a rank-2 tensor, got " + shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
}

}  // namespace

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank2(x, "linear");
  require_rank2(w, "linear");
  const std::size_t n = x.rows(), din = x.cols(), dout = w.cols();
  if (w.rows() != din) {
    throw DimensionError("linear: input " + shape_string(x.shape()) + " does not chain with weight " +
                         shape_string(w.shape()));
  }
  if (b.defined() && (b.rank() != 1 || b.dim(0) != dout)) {
    throw DimensionError("linear: bias " + shape_string(b.shape()) + " does not match weight " +
                         shape_string(w.shape()));
  }
  std::vector<double> out(n * dout);
  kernels::gemm_nn(x.values(), w.values(), out, n, din, dout);
  if (b.defined()) {
    const auto bv = b.values();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < dout; ++j) out[i * dout + j] += bv[j];
  }
  NodePtr px = x.node(), pw = w.node(), pb = b.defined() ? b.node() : nullptr;
  std::vector<Tensor> inputs{x, w};
  if (b.defined()) inputs.push_back(b);
  return make_result({n, dout}, std::move(out), std::move(inputs),
                     [px, pw, pb, n, din, dout](std::span<const double> g) {
                       if (px->requires_grad) kernels::gemm_nt_acc(g, pw->value, px->grad_buffer(), n, dout, din);
                       if (pw->requires_grad) kernels::gemm_tn_acc(px->value, g, pw->grad_buffer(), n, din, dout);
                       if (pb && pb->requires_grad) {
                         auto gb = pb->grad_buffer();
                         for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t j = 0; j < dout; ++j) gb[j] += g[i * dout + j];
                       }
                     });
}

Tensor matmul(const Tensor& a, const Tensor& b) { return linear(a, b, Tensor()); }

Tensor activation(const Tensor& x, Activation act) {
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  switch (act.kind) {
    case ActivationKind::relu:
      for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
      break;
    case ActivationKind::leaky_relu:
      for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : act.slope * xv[i];
      break;
    case ActivationKind::tanh:
      for (std::size_t i = 0; i < xv.size(); ++i) out[i] = std::tanh(xv[i]);
      break;
    case ActivationKind::identity:
      std::copy(xv.begin(), xv.end(), out.begin());
      break;
  }
  NodePtr px = x.node();
  std::vector<double> saved = act.kind == ActivationKind::tanh ? out : std::vector<double>{};
  return make_result(x.shape(), std::move(out), {x}, [px, act, saved = std::move(saved)](std::span<const double> g) {
    auto gx = px->grad_buffer();
    const auto& xv = px->value;
    for (std::size_t i = 0; i < g.size(); ++i) {
      double d = 1.0;
      switch (act.kind) {
        case ActivationKind::relu: d = xv[i] > 0.0 ? 1.0 : 0.0; break;
        case ActivationKind::leaky_relu: d = xv[i] > 0.0 ? 1.0 : act.slope; break;
        case ActivationKind::tanh: d = 1.0 - saved[i] * saved[i]; break;
        case ActivationKind::identity: break;
      }
      gx[i] += g[i] * d;
    }
  });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, RunningStats& stats, Mode mode,
                  BatchNormOptions opts) {
  require_rank2(x, "batch_norm");
  const std::size_t n = x.rows(), d = x.cols();
  if (n == 0) throw DimensionError("batch_norm: empty batch");
  if (gamma.numel() != d || beta.numel() != d) {
    throw DimensionError("batch_norm: affine parameters do not match input " + shape_string(x.shape()));
  }
  if (stats.mean.size() != d || stats.var.size() != d) {
    throw DimensionError("batch_norm: running statistics do not match input " + shape_string(x.shape()));
  }
  const auto xv = x.values();
  std::vector<double> mu(d, 0.0), inv_std(d, 0.0);
  if (mode == Mode::train) {
    std::vector<double> var(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d; ++c) mu[c] += xv[i * d + c];
    for (auto& m : mu) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d; ++c) {
        const double t = xv[i * d + c] - mu[c];
        var[c] += t * t;
      }
    for (std::size_t c = 0; c < d; ++c) {
      var[c] /= static_cast<double>(n);
      inv_std[c] = 1.0 / std::sqrt(var[c] + opts.eps);
      const double unbiased = n > 1 ? var[c] * static_cast<double>(n) / static_cast<double>(n - 1) : var[c];
      stats.mean[c] = (1.0 - opts.momentum) * stats.mean[c] + opts.momentum * mu[c];
      stats.var[c] = (1.0 - opts.momentum) * stats.var[c] + opts.momentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < d; ++c) {
      mu[c] = stats.mean[c];
      inv_std[c] = 1.0 / std::sqrt(stats.var[c] + opts.eps);
    }
  }
  const auto gv = gamma.values(), bv = beta.values();
  std::vector<double> xhat(n * d), out(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) {
      const double h = (xv[i * d + c] - mu[c]) * inv_std[c];
      xhat[i * d + c] = h;
      out[i * d + c] = gv[c] * h + bv[c];
    }
  NodePtr px = x.node(), pg = gamma.node(), pb = beta.node();
  const bool train = mode == Mode::train;
  return make_result(x.shape(), std::move(out), {x, gamma, beta},
                     [px, pg, pb, n, d, train, inv_std = std::move(inv_std),
                      xhat = std::move(xhat)](std::span<const double> g) {
                       if (pg->requires_grad) {
                         auto gg = pg->grad_buffer();
                         for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t c = 0; c < d; ++c) gg[c] += g[i * d + c] * xhat[i * d + c];
                       }
                       if (pb->requires_grad) {
                         auto gb = pb->grad_buffer();
                         for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t c = 0; c < d; ++c) gb[c] += g[i * d + c];
                       }
                       if (!px->requires_grad) return;
                       auto gx = px->grad_buffer();
                       const auto& gamma_v = pg->value;
                       if (!train) {
                         for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t c = 0; c < d; ++c)
                             gx[i * d + c] += g[i * d + c] * gamma_v[c] * inv_std[c];
                         return;
                       }
                       std::vector<double> sum_dh(d, 0.0), sum_dh_h(d, 0.0);
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t c = 0; c < d; ++c) {
                           const double dh = g[i * d + c] * gamma_v[c];
                           sum_dh[c] += dh;
                           sum_dh_h[c] += dh * xhat[i * d + c];
                         }
                       const double inv_n = 1.0 / static_cast<double>(n);
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t c = 0; c < d; ++c) {
                           const double dh = g[i * d + c] * gamma_v[c];
                           gx[i * d + c] += inv_std[c] * inv_n *
                                            (static_cast<double>(n) * dh - sum_dh[c] - xhat[i * d + c] * sum_dh_h[c]);
                         }
                     });
}

Tensor reduce_max_rows(const Tensor& x) {
  require_rank2(x, "reduce_max_rows");
  const std::size_t n = x.rows(), d = x.cols();
  if (n == 0) throw ArgumentError("reduce_max_rows: empty input");
  const auto xv = x.values();
  std::vector<double> out(xv.begin(), xv.begin() + static_cast<std::ptrdiff_t>(d));
  std::vector<std::size_t> arg(d, 0);
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c)
      if (xv[i * d + c] > out[c]) {
        out[c] = xv[i * d + c];
        arg[c] = i;
      }
  NodePtr px = x.node();
  return make_result({d}, std::move(out), {x}, [px, d, arg = std::move(arg)](std::span<const double> g) {
    auto gx = px->grad_buffer();
    for (std::size_t c = 0; c < d; ++c) gx[arg[c] * d + c] += g[c];
  });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> idx) {
  require_rank2(x, "gather_rows");
  const std::size_t n = x.rows(), d = x.cols(), m = idx.size();
  const auto xv = x.values();
  std::vector<double> out(m * d);
  for (std::size_t j = 0; j < m; ++j) {
    if (idx[j] >= n) {
      throw IndexError("gather_rows: index " + std::to_string(idx[j]) + " out of range for " +
                       std::to_string(n) + " rows");
    }
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(idx[j] * d), d, out.begin() + static_cast<std::ptrdiff_t>(j * d));
  }
  NodePtr px = x.node();
  std::vector<std::size_t> saved(idx.begin(), idx.end());
  return make_result({m, d}, std::move(out), {x}, [px, d, saved = std::move(saved)](std::span<const double> g) {
    auto gx = px->grad_buffer();
    for (std::size_t j = 0; j < saved.size(); ++j)
      for (std::size_t c = 0; c < d; ++c) gx[saved[j] * d + c] += g[j * d + c];
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ArgumentError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range for " + shape_string(first));
  std::size_t outer = 1, inner = 1, total = 0;
  for (std::size_t a = 0; a < axis; ++a) outer *= first[a];
  for (std::size_t a = axis + 1; a < first.size(); ++a) inner *= first[a];
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t a = 0; ok && a < s.size(); ++a)
      if (a != axis && s[a] != first[a]) ok = false;
    if (!ok) {
      throw DimensionError("concat: extent mismatch between " + shape_string(first) + " and " + shape_string(s));
    }
    total += s[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = total;
  std::vector<double> out(outer * total * inner);
  std::vector<std::size_t> widths;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.shape()[axis] * inner;
    const auto pv = p.values();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(o * w), w,
                  out.begin() + static_cast<std::ptrdiff_t>(o * total * inner + offset));
    widths.push_back(w);
    offset += w;
  }
  std::vector<NodePtr> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  const std::size_t row = total * inner;
  return make_result(std::move(out_shape), std::move(out), parts,
                     [nodes, widths, outer, row](std::span<const double> g) {
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < nodes.size(); ++k) {
                         if (nodes[k]->requires_grad) {
                           auto gp = nodes[k]->grad_buffer();
                           for (std::size_t o = 0; o < outer; ++o)
                             for (std::size_t t = 0; t < widths[k]; ++t) gp[o * widths[k] + t] += g[o * row + off + t];
                         }
                         off += widths[k];
                       }
                     });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank2(x, "slice_rows");
  if (begin > end || end > x.rows()) {
    throw IndexError("slice_rows: [" + std::to_string(begin) + "," + std::to_string(end) + ") outside " +
                     std::to_string(x.rows()) + " rows");
  }
  const std::size_t d = x.cols();
  const auto xv = x.values();
  std::vector<double> out(xv.begin() + static_cast<std::ptrdiff_t>(begin * d),
                          xv.begin() + static_cast<std::ptrdiff_t>(end * d));
  NodePtr px = x.node();
  return make_result({end - begin, d}, std::move(out), {x}, [px, begin, d](std::span<const double> g) {
    auto gx = px->grad_buffer();
    for (std::size_t t = 0; t < g.size(); ++t) gx[begin * d + t] += g[t];
  });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank2(x, "slice_cols");
  if (begin > end || end > x.cols()) {
    throw IndexError("slice_cols: [" + std::to_string(begin) + "," + std::to_string(end) + ") outside " +
                     std::to_string(x.cols()) + " columns");
  }
  const std::size_t n = x.rows(), d = x.cols(), w = end - begin;
  const auto xv = x.values();
  std::vector<double> out(n * w);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < w; ++c) out[i * w + c] = xv[i * d + begin + c];
  NodePtr px = x.node();
  return make_result({n, w}, std::move(out), {x}, [px, n, d, w, begin](std::span<const double> g) {
    auto gx = px->grad_buffer();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < w; ++c) gx[i * d + begin + c] += g[i * w + c];
  });
}

Tensor repeat_rows(const Tensor& v, std::size_t n) {
  const bool row_vector = v.rank() == 2 && v.rows() == 1;
  if (v.rank() != 1 && !row_vector) {
    throw DimensionError("repeat_rows: expected [d] or [1,d], got " + shape_string(v.shape()));
  }
  const std::size_t d = v.numel();
  const auto vv = v.values();
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i) std::copy(vv.begin(), vv.end(), out.begin() + static_cast<std::ptrdiff_t>(i * d));
  NodePtr pv = v.node();
  return make_result({n, d}, std::move(out), {v}, [pv, n, d](std::span<const double> g) {
    auto gv = pv->grad_buffer();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d; ++c) gv[c] += g[i * d + c];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  }
  const auto xv = x.values();
  NodePtr px = x.node();
  return make_result(std::move(shape), std::vector<double>(xv.begin(), xv.end()), {x},
                     [px](std::span<const double> g) {
                       auto gx = px->grad_buffer();
                       for (std::size_t t = 0; t < g.size(); ++t) gx[t] += g[t];
                     });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  NodePtr pa = a.node(), pb = b.node();
  return make_result(a.shape(), std::move(out), {a, b}, [pa, pb](std::span<const double> g) {
    for (const auto& p : {pa, pb}) {
      if (!p->requires_grad) continue;
      auto gp = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gp[i] += g[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  NodePtr pa = a.node(), pb = b.node();
  return make_result(a.shape(), std::move(out), {a, b}, [pa, pb](std::span<const double> g) {
    if (pa->requires_grad) {
      auto ga = pa->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (pb->requires_grad) {
      auto gb = pb->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * s;
  NodePtr pa = a.node();
  return make_result(a.shape(), std::move(out), {a}, [pa, s](std::span<const double> g) {
    auto ga = pa->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
  });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.values()) total += v;
  NodePtr pa = a.node();
  return make_result({}, {total}, {a}, [pa](std::span<const double> g) {
    auto ga = pa->grad_buffer();
    for (auto& v : ga) v += g[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ArgumentError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

}  // namespace spcnet
