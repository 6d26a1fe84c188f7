#pragma once

#include <cstddef>
#include <exception>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace opl {

/// Execution path for data-parallel kernels. kSerial is the plain reference
/// loop; kParallel splits work into fixed-size chunks so the reduction order
/// does not depend on the thread count.
enum class Exec { kSerial, kParallel };

inline constexpr std::size_t kReduceChunk = 64;

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

/// Deterministic chunked reduction.
///
/// `Acc` is default-constructible with `Acc::operator+=(const Acc&)`;
/// `make()` builds a zero accumulator and `body(i, acc)` adds item i.
/// Items are grouped in chunks of kReduceChunk, each chunk is reduced
/// sequentially, then chunk partials are combined in chunk order. Both paths
/// use the same grouping, so results are bitwise identical.
template <typename Acc, typename Make, typename Body>
Acc chunked_reduce(std::size_t count, Exec exec, Make make, Body body) {
  if (exec == Exec::kSerial) {
    Acc total = make();
    for (std::size_t begin = 0; begin < count; begin += kReduceChunk) {
      const std::size_t end = begin + kReduceChunk < count ? begin + kReduceChunk : count;
      Acc acc = make();
      for (std::size_t i = begin; i < end; ++i) body(i, acc);
      total += acc;
    }
    return total;
  }
  const std::size_t chunks = (count + kReduceChunk - 1) / kReduceChunk;
  std::vector<Acc> partial;
  partial.reserve(chunks);
  for (std::size_t c = 0; c < chunks; ++c) partial.push_back(make());
  const auto nchunks = static_cast<std::ptrdiff_t>(chunks);
  std::exception_ptr err;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < nchunks; ++c) {
    const std::size_t begin = static_cast<std::size_t>(c) * kReduceChunk;
    const std::size_t end = begin + kReduceChunk < count ? begin + kReduceChunk : count;
    Acc& acc = partial[static_cast<std::size_t>(c)];
    try {
      for (std::size_t i = begin; i < end; ++i) body(i, acc);
    } catch (...) {
#pragma omp critical(opl_reduce_err)
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  Acc total = make();
  for (auto& p : partial) total += p;
  return total;
}

}  // namespace opl
