// Times the OpenMP kernels against the serial references.
// Worker count comes from SPCNET_THREADS (default 1).

#include <chrono>
#include <cstdio>
#include <functional>

#include "reference.hpp"
#include "spcnet/geometry.hpp"
#include "spcnet/kernels.hpp"
#include "spcnet/layers.hpp"
#include "spcnet/training.hpp"

using namespace spcnet;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
  const auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void report(const char* name, double fast, double slow) {
  std::printf("%-22s kernel %9.3f ms   reference %9.3f ms   speedup %6.1fx\n", name, fast, slow, slow / fast);
}

}  // namespace

int main() {
  const int workers = kernels::configure_workers_from_env();
  std::printf("workers: %d\n", workers);
  Rng rng(7);
  const std::size_t n = 1024;
  std::vector<Point3> pts(n);
  std::vector<ref::P3> rpts(n);
  for (std::size_t i = 0; i < n; ++i) {
    pts[i] = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    rpts[i] = pts[i];
  }
  const PointCloud cloud(pts);

  report("fps 1024 -> 256", time_ms([&] { geometry::fps(cloud, 256); }, 5),
         time_ms([&] { ref::fps(rpts, 256); }, 1));
  report("knn k=16", time_ms([&] { geometry::knn(cloud, 16); }, 5),
         time_ms([&] { ref::knn(rpts, rpts, 16, true); }, 1));
  const std::vector<ref::P3> half(rpts.begin(), rpts.begin() + n / 2);
  const PointCloud half_cloud = cloud.select([&] {
    std::vector<std::size_t> idx(n / 2);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return idx;
  }());
  report("chamfer 1024 x 512", time_ms([&] { chamfer_value(cloud, half_cloud); }, 5),
         time_ms([&] { ref::chamfer(rpts, half); }, 1));

  // One adaptconv layer, 256 points, 16 -> 32 channels.
  const std::size_t m = 256, D = 16, M = 32, H = 16, k = 16;
  ParamDecls decls;
  layers::declare_adaptconv(decls, "conv", D, M, H);
  const ParamSet params = materialize(decls, 3);
  const PointCloud sub = cloud.select([&] {
    std::vector<std::size_t> idx(m);
    for (std::size_t i = 0; i < m; ++i) idx[i] = i;
    return idx;
  }());
  const NeighborGraph graph = geometry::knn(sub, k);
  std::vector<double> fv(m * D);
  for (auto& v : fv) v = rng.uniform(-1, 1);
  const Tensor coords = sub.to_tensor();
  const Tensor feats({m, D}, fv);

  ref::AdaptWeights w;
  auto to_mat = [](const Tensor& t) {
    ref::Mat out(t.rows(), std::vector<double>(t.cols()));
    for (std::size_t r = 0; r < t.rows(); ++r)
      for (std::size_t c = 0; c < t.cols(); ++c) out[r][c] = t.at(r, c);
    return out;
  };
  w.w0 = to_mat(params.at("conv.kernel0.weight"));
  w.w1 = to_mat(params.at("conv.kernel1.weight"));
  const auto b0 = params.at("conv.kernel0.bias").values();
  const auto b1 = params.at("conv.kernel1.bias").values();
  w.b0.assign(b0.begin(), b0.end());
  w.b1.assign(b1.begin(), b1.end());
  const ref::Mat rf = to_mat(feats);
  std::vector<ref::P3> rsub(rpts.begin(), rpts.begin() + m);
  std::vector<std::vector<std::size_t>> rgraph(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto nb = graph.neighbors(i);
    rgraph[i].assign(nb.begin(), nb.end());
  }
  report("adaptconv 256 pts", time_ms([&] { layers::adaptconv(coords, feats, graph, params, "conv"); }, 5),
         time_ms([&] { ref::adaptconv(rsub, rf, rsub, rf, rgraph, w); }, 1));
  return 0;
}
