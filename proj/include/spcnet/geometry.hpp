#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "spcnet/rng.hpp"
#include "spcnet/tensor.hpp"

namespace spcnet {

using Point3 = std::array<double, 3>;

/// Ordered 3-D points stored as packed xyz triples. Indices are stable
/// identities within one pipeline pass.
class PointCloud {
 public:
  PointCloud() = default;
  explicit PointCloud(const std::vector<Point3>& points);
  static PointCloud from_flat(std::vector<double> xyz);
  /// Values of an [n,3] tensor.
  static PointCloud from_tensor(const Tensor& t);

  std::size_t size() const { return xyz_.size() / 3; }
  bool empty() const { return xyz_.empty(); }
  Point3 operator[](std::size_t i) const { return {xyz_[3 * i], xyz_[3 * i + 1], xyz_[3 * i + 2]}; }
  std::span<const double> flat() const { return xyz_; }
  std::span<double> mutable_flat() { return xyz_; }

  void push_back(const Point3& p);
  PointCloud select(std::span<const std::size_t> idx) const;
  /// Concatenation, this cloud's points first.
  PointCloud append(const PointCloud& other) const;
  Tensor to_tensor(bool requires_grad = false) const;

  bool operator==(const PointCloud& other) const = default;

 private:
  std::vector<double> xyz_;
};

/// Per-point neighbour lists, k entries each, ordered by (distance, index).
struct NeighborGraph {
  std::size_t k = 0;
  std::vector<std::size_t> indices;  // row-major [points, k]

  std::size_t size() const { return k == 0 ? 0 : indices.size() / k; }
  std::span<const std::size_t> neighbors(std::size_t i) const { return {indices.data() + i * k, k}; }
};

namespace geometry {

Point3 centroid(const PointCloud& cloud);

/// Greedy farthest point sampling. Starts from the point nearest the
/// centroid unless `start` is given; ties always go to the lowest index.
/// Returns indices in selection order.
std::vector<std::size_t> fps(const PointCloud& cloud, std::size_t n, std::optional<std::size_t> start = {});

/// n distinct indices by partial Fisher-Yates.
std::vector<std::size_t> rps(const PointCloud& cloud, std::size_t n, Rng& rng);

/// k nearest reference points for every query point. When query and
/// reference are the same object the point itself is excluded.
NeighborGraph knn(const PointCloud& query, const PointCloud& reference, std::size_t k);
NeighborGraph knn(const PointCloud& cloud, std::size_t k);

/// Lowest-index nearest reference point per query point.
std::vector<std::size_t> nearest_index(const PointCloud& query, const PointCloud& reference);

struct Split {
  PointCloud partial;  // P_N
  PointCloud missing;  // P_M
  std::vector<std::size_t> partial_idx;
  std::vector<std::size_t> missing_idx;
};

/// The round(ratio * |cloud|) points nearest the viewpoint become the
/// missing part; both parts keep the original relative order.
Split viewpoint_split(const PointCloud& cloud, const Point3& viewpoint, double ratio);

/// Centroid to the origin, then uniform scale so max |coordinate| = 1.
PointCloud normalize_cloud(const PointCloud& cloud);

/// The eight cube corners (+-1, +-1, +-1), in binary counting order.
std::array<Point3, 8> cube_corner_viewpoints();

}  // namespace geometry
}  // namespace spcnet
