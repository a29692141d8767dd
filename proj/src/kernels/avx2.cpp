#include "polylin/kernels.hpp"

#include <algorithm>
#include <cmath>

#if defined(__x86_64__) || defined(__i386__)
#include <immintrin.h>
#define POLYLIN_HAVE_AVX2_KERNELS 1
#endif

namespace polylin::kernels::detail {

#ifdef POLYLIN_HAVE_AVX2_KERNELS

namespace {

constexpr int kMaxDim = 16;

__attribute__((target("avx2,fma"))) void matvec_batch(const double* m, int d, const double* x,
                                                       double* y, std::size_t count) {
  const std::size_t vec_end = count - count % 4;
  for (int r = 0; r < d; ++r) {
    double* yr = y + static_cast<std::size_t>(r) * count;
    for (std::size_t i = 0; i < vec_end; i += 4) {
      __m256d acc = _mm256_setzero_pd();
      for (int k = 0; k < d; ++k) {
        const __m256d xk = _mm256_loadu_pd(x + static_cast<std::size_t>(k) * count + i);
        acc = _mm256_fmadd_pd(_mm256_set1_pd(m[r * d + k]), xk, acc);
      }
      _mm256_storeu_pd(yr + i, acc);
    }
    for (std::size_t i = vec_end; i < count; ++i) {
      double acc = 0.0;
      for (int k = 0; k < d; ++k) acc = std::fma(m[r * d + k], x[static_cast<std::size_t>(k) * count + i], acc);
      yr[i] = acc;
    }
  }
}

__attribute__((target("avx2,fma"))) void weighted_max_norms(const double* mats,
                                                             const double* weights,
                                                             std::size_t mats_count, int d,
                                                             const double* x, std::size_t count,
                                                             double* out) {
  if (d > kMaxDim) {
    scalar_table.weighted_max_norms(mats, weights, mats_count, d, x, count, out);
    return;
  }
  const std::size_t dd = static_cast<std::size_t>(d) * d;
  const std::size_t vec_end = count - count % 4;
  __m256d xs[kMaxDim];
  for (std::size_t i = 0; i < vec_end; i += 4) {
    for (int k = 0; k < d; ++k) xs[k] = _mm256_loadu_pd(x + static_cast<std::size_t>(k) * count + i);
    __m256d best = _mm256_loadu_pd(out + i);
    for (std::size_t j = 0; j < mats_count; ++j) {
      const double* m = mats + j * dd;
      __m256d sq = _mm256_setzero_pd();
      for (int r = 0; r < d; ++r) {
        __m256d acc = _mm256_setzero_pd();
        for (int k = 0; k < d; ++k) acc = _mm256_fmadd_pd(_mm256_set1_pd(m[r * d + k]), xs[k], acc);
        sq = _mm256_fmadd_pd(acc, acc, sq);
      }
      const __m256d val = _mm256_mul_pd(_mm256_set1_pd(weights[j]), _mm256_sqrt_pd(sq));
      best = _mm256_max_pd(best, val);
    }
    _mm256_storeu_pd(out + i, best);
  }
  if (vec_end < count) {
    // Tail: reuse the scalar path on a compacted copy.
    const std::size_t tail = count - vec_end;
    double buf[kMaxDim * 4];
    for (int k = 0; k < d; ++k)
      for (std::size_t i = 0; i < tail; ++i) buf[k * tail + i] = x[static_cast<std::size_t>(k) * count + vec_end + i];
    scalar_table.weighted_max_norms(mats, weights, mats_count, d, buf, tail, out + vec_end);
  }
}

__attribute__((target("avx2,fma"))) void axpy(double alpha, const double* x, double* y,
                                               std::size_t n) {
  const __m256d a = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(a, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

}  // namespace

const Table avx2_table{matvec_batch, weighted_max_norms, axpy};

#else

const Table avx2_table = scalar_table;

#endif

}  // namespace polylin::kernels::detail
