#include "spcnet/kernels.hpp"

#include <algorithm>
#include <limits>
#include <utility>
#include <vector>

namespace spcnet::kernels {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

bool go_parallel(std::size_t work) { return worker_count() > 1 && work >= kParallelWork; }

}  // namespace

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t n, std::size_t k, std::size_t m, bool accumulate) {
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) num_threads(worker_count()) if (go_parallel(n * k * m))
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    double* crow = pc + i * m;
    if (!accumulate) std::fill(crow, crow + m, 0.0);
    const double* arow = pa + i * k;
    for (std::size_t t = 0; t < k; ++t) {
      const double av = arow[t];
      if (av == 0.0) continue;
      const double* brow = pb + t * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 std::size_t k, std::size_t n, std::size_t m) {
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) num_threads(worker_count()) if (go_parallel(n * k * m))
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    double* crow = pc + i * m;
    for (std::size_t t = 0; t < k; ++t) {
      const double av = pa[t * n + i];
      if (av == 0.0) continue;
      const double* brow = pb + t * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 std::size_t n, std::size_t k, std::size_t m) {
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) num_threads(worker_count()) if (go_parallel(n * k * m))
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const double* arow = pa + i * k;
    double* crow = pc + i * m;
    for (std::size_t j = 0; j < m; ++j) {
      const double* brow = pb + j * k;
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += arow[t] * brow[t];
      crow[j] += acc;
    }
  }
}

void nearest_neighbors(std::span<const double> query, std::span<const double> reference,
                       std::span<std::size_t> index_out, std::span<double> dist2_out) {
  const std::size_t nq = query.size() / 3;
  const std::size_t nr = reference.size() / 3;
  const auto rows = static_cast<std::ptrdiff_t>(nq);
#pragma omp parallel for schedule(static) num_threads(worker_count()) if (go_parallel(nq * nr))
  for (std::ptrdiff_t q = 0; q < rows; ++q) {
    const double* qp = query.data() + 3 * q;
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_idx = 0;
    for (std::size_t r = 0; r < nr; ++r) {
      const double d = squared_distance(qp, reference.data() + 3 * r);
      if (d < best) {
        best = d;
        best_idx = r;
      }
    }
    index_out[q] = best_idx;
    dist2_out[q] = best;
  }
}

void knn_rows(std::span<const double> query, std::span<const double> reference, std::size_t k,
              bool exclude_self, std::span<std::size_t> out) {
  const std::size_t nq = query.size() / 3;
  const std::size_t nr = reference.size() / 3;
  const auto rows = static_cast<std::ptrdiff_t>(nq);
#pragma omp parallel num_threads(worker_count()) if (go_parallel(nq * nr))
  {
    std::vector<std::pair<double, std::size_t>> cand;
    cand.reserve(nr);
#pragma omp for schedule(static)
    for (std::ptrdiff_t q = 0; q < rows; ++q) {
      const double* qp = query.data() + 3 * q;
      cand.clear();
      for (std::size_t r = 0; r < nr; ++r) {
        if (exclude_self && r == static_cast<std::size_t>(q)) continue;
        cand.emplace_back(squared_distance(qp, reference.data() + 3 * r), r);
      }
      std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
      for (std::size_t j = 0; j < k; ++j) out[q * k + j] = cand[j].second;
    }
  }
}

}  // namespace spcnet::kernels
