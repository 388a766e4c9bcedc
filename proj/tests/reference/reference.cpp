#include "reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ref {

namespace {

double leaky(double x) { return x > 0.0 ? x : 0.2 * x; }

}  // namespace

double dist2(const P3& a, const P3& b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

std::vector<std::size_t> fps(const std::vector<P3>& pts, std::size_t n, std::optional<std::size_t> start) {
  if (n == 0 || n > pts.size()) throw std::invalid_argument("ref::fps: bad count");
  std::size_t first = 0;
  if (start) {
    first = *start;
  } else {
    P3 c{0, 0, 0};
    for (const auto& p : pts)
      for (int a = 0; a < 3; ++a) c[a] += p[a];
    for (auto& v : c) v /= static_cast<double>(pts.size());
    for (std::size_t i = 1; i < pts.size(); ++i)
      if (dist2(pts[i], c) < dist2(pts[first], c)) first = i;
  }
  std::vector<std::size_t> sel{first};
  while (sel.size() < n) {
    std::size_t best = pts.size();
    double best_d = -1.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (std::find(sel.begin(), sel.end(), i) != sel.end()) continue;
      double d = std::numeric_limits<double>::infinity();
      for (auto s : sel) d = std::min(d, dist2(pts[i], pts[s]));
      if (d > best_d) {
        best_d = d;
        best = i;
      }
    }
    sel.push_back(best);
  }
  return sel;
}

std::vector<std::vector<std::size_t>> knn(const std::vector<P3>& query, const std::vector<P3>& reference,
                                          std::size_t k, bool exclude_self) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t q = 0; q < query.size(); ++q) {
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t r = 0; r < reference.size(); ++r)
      if (!(exclude_self && r == q)) all.emplace_back(dist2(query[q], reference[r]), r);
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> row;
    for (std::size_t t = 0; t < k; ++t) row.push_back(all.at(t).second);
    out.push_back(row);
  }
  return out;
}

std::vector<std::size_t> nearest(const std::vector<P3>& query, const std::vector<P3>& reference) {
  std::vector<std::size_t> out;
  for (const auto& q : query) {
    std::size_t best = 0;
    for (std::size_t r = 1; r < reference.size(); ++r)
      if (dist2(q, reference[r]) < dist2(q, reference[best])) best = r;
    out.push_back(best);
  }
  return out;
}

double chamfer(const std::vector<P3>& a, const std::vector<P3>& b) {
  double sa = 0.0, sb = 0.0;
  for (const auto& x : a) {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& y : b) d = std::min(d, dist2(x, y));
    sa += d;
  }
  for (const auto& y : b) {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& x : a) d = std::min(d, dist2(y, x));
    sb += d;
  }
  return sa / static_cast<double>(a.size()) + sb / static_cast<double>(b.size());
}

Mat matmul(const Mat& a, const Mat& b) {
  Mat out(a.size(), std::vector<double>(b.at(0).size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b[0].size(); ++j)
      for (std::size_t t = 0; t < b.size(); ++t) out[i][j] += a[i][t] * b[t][j];
  return out;
}

Mat linear(const Mat& x, const Mat& w, const std::vector<double>& b) {
  Mat out = matmul(x, w);
  for (auto& row : out)
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += b.empty() ? 0.0 : b[j];
  return out;
}

Mat adaptconv(const std::vector<P3>& center, const Mat& center_feats, const std::vector<P3>& support,
              const Mat& support_feats, const std::vector<std::vector<std::size_t>>& graph, const AdaptWeights& w) {
  const std::size_t D = center_feats.at(0).size();
  const std::size_t H = w.b0.size();
  const std::size_t M = w.b1.size() / (2 * D);
  Mat out;
  for (std::size_t i = 0; i < center.size(); ++i) {
    std::vector<double> best(M, -std::numeric_limits<double>::infinity());
    for (std::size_t j : graph[i]) {
      const double dx[6] = {center[i][0], center[i][1], center[i][2], support[j][0] - center[i][0],
                            support[j][1] - center[i][1], support[j][2] - center[i][2]};
      std::vector<double> hidden(H);
      for (std::size_t h = 0; h < H; ++h) {
        double s = w.b0[h];
        for (int a = 0; a < 6; ++a) s += dx[a] * w.w0[a][h];
        hidden[h] = leaky(s);
      }
      for (std::size_t m = 0; m < M; ++m) {
        double response = 0.0;
        for (std::size_t d = 0; d < 2 * D; ++d) {
          double kern = w.b1[m * 2 * D + d];
          for (std::size_t h = 0; h < H; ++h) kern += hidden[h] * w.w1[h][m * 2 * D + d];
          const double edge = d < D ? center_feats[i][d] : support_feats[j][d - D] - center_feats[i][d - D];
          response += kern * edge;
        }
        best[m] = std::max(best[m], leaky(response));
      }
    }
    out.push_back(best);
  }
  return out;
}

Mat edgeconv(const Mat& center_feats, const Mat& support_feats, const std::vector<std::vector<std::size_t>>& graph,
             const Mat& theta) {
  const std::size_t D = center_feats.at(0).size();
  const std::size_t M = theta.at(0).size();
  Mat out;
  for (std::size_t i = 0; i < center_feats.size(); ++i) {
    std::vector<double> best(M, -std::numeric_limits<double>::infinity());
    for (std::size_t j : graph[i]) {
      for (std::size_t m = 0; m < M; ++m) {
        double s = 0.0;
        for (std::size_t d = 0; d < D; ++d)
          s += theta[d][m] * center_feats[i][d] + theta[D + d][m] * (support_feats[j][d] - center_feats[i][d]);
        best[m] = std::max(best[m], leaky(s));
      }
    }
    out.push_back(best);
  }
  return out;
}

Mat interpolate(const std::vector<P3>& query, const std::vector<P3>& support, const Mat& feats, std::size_t k) {
  const auto graph = knn(query, support, k, false);
  Mat out;
  for (std::size_t i = 0; i < query.size(); ++i) {
    std::vector<double> row(feats.at(0).size(), 0.0);
    double total = 0.0;
    for (auto j : graph[i]) total += 1.0 / (std::sqrt(dist2(query[i], support[j])) + 1e-8);
    for (auto j : graph[i]) {
      const double wt = (1.0 / (std::sqrt(dist2(query[i], support[j])) + 1e-8)) / total;
      for (std::size_t d = 0; d < row.size(); ++d) row[d] += wt * feats[j][d];
    }
    out.push_back(row);
  }
  return out;
}

}  // namespace ref
