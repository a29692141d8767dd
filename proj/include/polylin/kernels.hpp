#pragma once

#include <cstddef>
#include <string_view>

// Batched dense kernels on structure-of-arrays point sets.
//
// A batch of `count` points in R^d is stored component-major:
// x[k * count + i] is component k of point i. Matrices are row-major d x d.
namespace polylin::kernels {

enum class Isa { Scalar, Avx2 };

struct Table {
  /// y = M x for every point of the batch.
  void (*matvec_batch)(const double* m, int d, const double* x, double* y, std::size_t count);
  /// out[i] = max(out[i], max_j w_j * ||M_j x_i||_2) over `mats` matrices.
  void (*weighted_max_norms)(const double* mats, const double* weights, std::size_t mats_count,
                             int d, const double* x, std::size_t count, double* out);
  /// y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
};

const Table& table(Isa isa);

/// True when the running CPU can execute the variant.
bool supported(Isa isa);

/// Variant used by the convenience wrappers. Chosen once at first use from
/// CPU features; POLYLIN_FORCE_SCALAR=1 in the environment pins the scalar path.
Isa active_isa();
std::string_view name(Isa isa);

inline void matvec_batch(const double* m, int d, const double* x, double* y, std::size_t count) {
  table(active_isa()).matvec_batch(m, d, x, y, count);
}
inline void weighted_max_norms(const double* mats, const double* weights, std::size_t mats_count,
                               int d, const double* x, std::size_t count, double* out) {
  table(active_isa()).weighted_max_norms(mats, weights, mats_count, d, x, count, out);
}
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  table(active_isa()).axpy(alpha, x, y, n);
}

namespace detail {
extern const Table scalar_table;
extern const Table avx2_table;
}  // namespace detail

}  // namespace polylin::kernels
