#include "polylin/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace polylin::kernels::detail {

namespace {

void matvec_batch(const double* m, int d, const double* x, double* y, std::size_t count) {
  for (int r = 0; r < d; ++r) {
    double* yr = y + static_cast<std::size_t>(r) * count;
    for (std::size_t i = 0; i < count; ++i) {
      double acc = 0.0;
      for (int k = 0; k < d; ++k) acc += m[r * d + k] * x[static_cast<std::size_t>(k) * count + i];
      yr[i] = acc;
    }
  }
}

void weighted_max_norms(const double* mats, const double* weights, std::size_t mats_count, int d,
                        const double* x, std::size_t count, double* out) {
  const std::size_t dd = static_cast<std::size_t>(d) * d;
  for (std::size_t i = 0; i < count; ++i) {
    double best = out[i];
    for (std::size_t j = 0; j < mats_count; ++j) {
      const double* m = mats + j * dd;
      double sq = 0.0;
      for (int r = 0; r < d; ++r) {
        double acc = 0.0;
        for (int k = 0; k < d; ++k) acc += m[r * d + k] * x[static_cast<std::size_t>(k) * count + i];
        sq += acc * acc;
      }
      best = std::max(best, weights[j] * std::sqrt(sq));
    }
    out[i] = best;
  }
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

const Table scalar_table{matvec_batch, weighted_max_norms, axpy};

}  // namespace polylin::kernels::detail
