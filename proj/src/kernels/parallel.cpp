#include <omp.h>

#include <cstdlib>
#include <string>

#include "spcnet/errors.hpp"
#include "spcnet/kernels.hpp"

namespace spcnet::kernels {

namespace {
int g_workers = 1;
}

int worker_count() { return g_workers; }

void set_worker_count(int workers) {
  if (workers < 1) throw ArgumentError("worker count must be >= 1");
  g_workers = workers;
  omp_set_num_threads(workers);
}

int configure_workers_from_env() {
  const char* env = std::getenv("SPCNET_THREADS");
  if (env == nullptr || *env == '\0') {
    set_worker_count(1);
    return 1;
  }
  int n = 0;
  try {
    n = std::stoi(env);
  } catch (const std::exception&) {
    throw ArgumentError(std::string("SPCNET_THREADS is not an integer: ") + env);
  }
  set_worker_count(n);
  return n;
}

}  // namespace spcnet::kernels
