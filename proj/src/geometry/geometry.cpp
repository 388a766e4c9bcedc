#include "spcnet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "spcnet/errors.hpp"
#include "spcnet/kernels.hpp"

namespace spcnet {

PointCloud::PointCloud(const std::vector<Point3>& points) {
  xyz_.reserve(points.size() * 3);
  for (const auto& p : points) xyz_.insert(xyz_.end(), p.begin(), p.end());
}

PointCloud PointCloud::from_flat(std::vector<double> xyz) {
  if (xyz.size() % 3 != 0) throw DimensionError("point data length is not a multiple of 3");
  PointCloud c;
  c.xyz_ = std::move(xyz);
  return c;
}

PointCloud PointCloud::from_tensor(const Tensor& t) {
  if (t.rank() != 2 || t.cols() != 3) throw DimensionError("expected [n,3] coordinates, got " + shape_string(t.shape()));
  const auto v = t.values();
  return from_flat(std::vector<double>(v.begin(), v.end()));
}

void PointCloud::push_back(const Point3& p) { xyz_.insert(xyz_.end(), p.begin(), p.end()); }

PointCloud PointCloud::select(std::span<const std::size_t> idx) const {
  PointCloud out;
  out.xyz_.reserve(idx.size() * 3);
  for (auto i : idx) {
    if (i >= size()) throw IndexError("point index " + std::to_string(i) + " out of range");
    out.xyz_.insert(out.xyz_.end(), xyz_.begin() + static_cast<std::ptrdiff_t>(3 * i),
                    xyz_.begin() + static_cast<std::ptrdiff_t>(3 * i + 3));
  }
  return out;
}

PointCloud PointCloud::append(const PointCloud& other) const {
  PointCloud out = *this;
  out.xyz_.insert(out.xyz_.end(), other.xyz_.begin(), other.xyz_.end());
  return out;
}

Tensor PointCloud::to_tensor(bool requires_grad) const { return Tensor({size(), 3}, xyz_, requires_grad); }

namespace geometry {

Point3 centroid(const PointCloud& cloud) {
  if (cloud.empty()) throw ArgumentError("centroid of an empty cloud");
  Point3 c{0.0, 0.0, 0.0};
  const auto f = cloud.flat();
  for (std::size_t i = 0; i < cloud.size(); ++i)
    for (int a = 0; a < 3; ++a) c[a] += f[3 * i + a];
  for (auto& v : c) v /= static_cast<double>(cloud.size());
  return c;
}

std::vector<std::size_t> fps(const PointCloud& cloud, std::size_t n, std::optional<std::size_t> start) {
  const std::size_t total = cloud.size();
  if (n < 1 || n > total) {
    throw ArgumentError("fps: cannot sample " + std::to_string(n) + " of " + std::to_string(total) + " points");
  }
  const auto f = cloud.flat();
  std::size_t first = 0;
  if (start) {
    if (*start >= total) throw ArgumentError("fps: start index out of range");
    first = *start;
  } else {
    const Point3 c = centroid(cloud);
    double best = kernels::squared_distance(f.data(), c.data());
    for (std::size_t i = 1; i < total; ++i) {
      const double d = kernels::squared_distance(f.data() + 3 * i, c.data());
      if (d < best) {
        best = d;
        first = i;
      }
    }
  }

  std::vector<std::size_t> picked{first};
  picked.reserve(n);
  std::vector<double> min_d(total);
  std::vector<bool> taken(total, false);
  taken[first] = true;
  for (std::size_t i = 0; i < total; ++i) min_d[i] = kernels::squared_distance(f.data() + 3 * i, f.data() + 3 * first);
  while (picked.size() < n) {
    std::size_t next = total;
    double best = -1.0;
    for (std::size_t i = 0; i < total; ++i) {
      if (!taken[i] && min_d[i] > best) {
        best = min_d[i];
        next = i;
      }
    }
    taken[next] = true;
    picked.push_back(next);
    const double* p = f.data() + 3 * next;
    for (std::size_t i = 0; i < total; ++i) min_d[i] = std::min(min_d[i], kernels::squared_distance(f.data() + 3 * i, p));
  }
  return picked;
}

std::vector<std::size_t> rps(const PointCloud& cloud, std::size_t n, Rng& rng) {
  const std::size_t total = cloud.size();
  if (n < 1 || n > total) {
    throw ArgumentError("rps: cannot sample " + std::to_string(n) + " of " + std::to_string(total) + " points");
  }
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(total - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  return idx;
}

NeighborGraph knn(const PointCloud& query, const PointCloud& reference, std::size_t k) {
  const bool self = &query == &reference;
  const std::size_t available = reference.size() - (self ? 1 : 0);
  if (reference.empty() || k > available) {
    throw ArgumentError("knn: k = " + std::to_string(k) + " exceeds the " + std::to_string(available) +
                        " available neighbours");
  }
  NeighborGraph g;
  g.k = k;
  g.indices.resize(query.size() * k);
  if (k > 0) kernels::knn_rows(query.flat(), reference.flat(), k, self, g.indices);
  return g;
}

NeighborGraph knn(const PointCloud& cloud, std::size_t k) { return knn(cloud, cloud, k); }

std::vector<std::size_t> nearest_index(const PointCloud& query, const PointCloud& reference) {
  if (reference.empty()) throw ArgumentError("nearest_index: empty reference cloud");
  std::vector<std::size_t> idx(query.size());
  std::vector<double> d2(query.size());
  kernels::nearest_neighbors(query.flat(), reference.flat(), idx, d2);
  return idx;
}

Split viewpoint_split(const PointCloud& cloud, const Point3& viewpoint, double ratio) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ArgumentError("viewpoint_split: ratio must lie in [0,1]");
  const std::size_t n = cloud.size();
  const auto missing_count = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  const auto f = cloud.flat();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = kernels::squared_distance(f.data() + 3 * i, viewpoint.data());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });

  std::vector<bool> is_missing(n, false);
  for (std::size_t i = 0; i < missing_count; ++i) is_missing[order[i]] = true;
  Split s;
  for (std::size_t i = 0; i < n; ++i) (is_missing[i] ? s.missing_idx : s.partial_idx).push_back(i);
  s.partial = cloud.select(s.partial_idx);
  s.missing = cloud.select(s.missing_idx);
  return s;
}

PointCloud normalize_cloud(const PointCloud& cloud) {
  if (cloud.size() < 2) throw ArgumentError("normalize_cloud: need at least two points");
  const Point3 c = centroid(cloud);
  std::vector<double> out(cloud.flat().begin(), cloud.flat().end());
  double max_abs = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] -= c[i % 3];
    max_abs = std::max(max_abs, std::abs(out[i]));
  }
  if (max_abs == 0.0) throw ArgumentError("normalize_cloud: all points coincide");
  for (auto& v : out) v /= max_abs;
  return PointCloud::from_flat(std::move(out));
}

std::array<Point3, 8> cube_corner_viewpoints() {
  std::array<Point3, 8> out{};
  for (std::size_t i = 0; i < 8; ++i) {
    out[i] = {(i & 4) ? 1.0 : -1.0, (i & 2) ? 1.0 : -1.0, (i & 1) ? 1.0 : -1.0};
  }
  return out;
}

}  // namespace geometry
}  // namespace spcnet
