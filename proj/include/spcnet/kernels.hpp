#pragma once

// Row-parallel compute kernels. Every kernel partitions work by output row
// and never reduces across threads, so results are bit-identical for any
// worker count.

#include <cstddef>
#include <span>

namespace spcnet::kernels {

/// Worker cap for OpenMP regions. Defaults to 1 (deterministic default).
int worker_count();
void set_worker_count(int workers);
/// Applies SPCNET_THREADS if set; returns the resulting worker count.
int configure_workers_from_env();

/// C[n,m] = A[n,k]·B[k,m], or C += A·B when accumulate is set.
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t n, std::size_t k, std::size_t m, bool accumulate = false);
/// C[n,m] += A[k,n]^T·B[k,m]
void gemm_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 std::size_t k, std::size_t n, std::size_t m);
/// C[n,m] += A[n,k]·B[m,k]^T
void gemm_nt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 std::size_t n, std::size_t k, std::size_t m);

inline double squared_distance(const double* a, const double* b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

/// For each query point, the lowest-index nearest reference point and its
/// squared distance. Coordinates are packed xyz triples.
void nearest_neighbors(std::span<const double> query, std::span<const double> reference,
                       std::span<std::size_t> index_out, std::span<double> dist2_out);

/// k nearest reference points per query, ordered by (squared distance,
/// index). With exclude_self, reference index q is skipped for query q.
void knn_rows(std::span<const double> query, std::span<const double> reference, std::size_t k,
              bool exclude_self, std::span<std::size_t> out);

}  // namespace spcnet::kernels
