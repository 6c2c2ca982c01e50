#pragma once

#include <cstddef>
#include <exception>
#include <span>

namespace omtube {

/// Execution policy for ensemble kernels. `serial` is the reference
/// implementation; `parallel` must reproduce it bit for bit.
enum class Execution { serial, parallel };

/// Worker count used by parallel kernels: OMTUBE_THREADS if set, else the
/// OpenMP default.
int worker_count();
/// Applies OMTUBE_THREADS (if set) to the OpenMP runtime.
void configure_workers_from_env();

/// Order-independent pairwise summation.
double pairwise_sum(std::span<const double> values);

/// Runs body(i) for i in [0, n). Each index must touch only its own data.
/// In parallel mode the first exception thrown by any index is rethrown
/// after the loop.
template <class Body>
void for_each_index(Execution exec, std::size_t n, Body&& body) {
  if (exec == Execution::serial) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  const auto count = static_cast<long long>(n);
  std::exception_ptr error;
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(omtube_for_each_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace omtube
