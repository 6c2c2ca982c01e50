#include "omtube/parallel.hpp"

#include <omp.h>

#include <cstdlib>
#include <string>

namespace omtube {

void configure_workers_from_env() {
  if (const char* env = std::getenv("OMTUBE_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) omp_set_num_threads(n);
    } catch (...) {
      // ignore malformed values; OpenMP default applies
    }
  }
}

int worker_count() {
  configure_workers_from_env();
  return omp_get_max_threads();
}

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 16) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

}  // namespace omtube
