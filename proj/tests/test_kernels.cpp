#include <doctest.h>

#include "polylin/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace k = polylin::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST_CASE("active isa is supported") {
  CHECK(k::supported(k::active_isa()));
  CHECK(k::supported(k::Isa::Scalar));
}

TEST_CASE("matvec_batch variants agree with a naive product") {
  for (int d : {1, 2, 3, 4, 7}) {
    for (std::size_t count : {std::size_t{1}, std::size_t{3}, std::size_t{4}, std::size_t{37}, std::size_t{128}}) {
      const auto m = random_vec(static_cast<std::size_t>(d * d), 11 + d);
      const auto x = random_vec(static_cast<std::size_t>(d) * count, 29 + count);
      std::vector<double> ref(static_cast<std::size_t>(d) * count);
      for (int r = 0; r < d; ++r)
        for (std::size_t i = 0; i < count; ++i) {
          double acc = 0;
          for (int c = 0; c < d; ++c) acc += m[r * d + c] * x[c * count + i];
          ref[r * count + i] = acc;
        }
      for (auto isa : {k::Isa::Scalar, k::Isa::Avx2}) {
        if (!k::supported(isa)) continue;
        std::vector<double> y(ref.size());
        k::table(isa).matvec_batch(m.data(), d, x.data(), y.data(), count);
        for (std::size_t i = 0; i < y.size(); ++i) CHECK(rel_err(y[i], ref[i]) < 1e-14);
      }
    }
  }
}

TEST_CASE("weighted_max_norms variants are equivalent") {
  for (int d : {1, 2, 4, 5}) {
    const std::size_t mats = 19, count = 103;
    const auto m = random_vec(mats * d * d, 5 + d);
    auto w = random_vec(mats, 7);
    for (auto& x : w) x = std::abs(x);
    const auto x = random_vec(static_cast<std::size_t>(d) * count, 13);
    std::vector<double> scalar(count, 0.0), simd(count, 0.0);
    k::table(k::Isa::Scalar).weighted_max_norms(m.data(), w.data(), mats, d, x.data(), count, scalar.data());
    if (!k::supported(k::Isa::Avx2)) continue;
    k::table(k::Isa::Avx2).weighted_max_norms(m.data(), w.data(), mats, d, x.data(), count, simd.data());
    for (std::size_t i = 0; i < count; ++i) CHECK(rel_err(simd[i], scalar[i]) < 1e-13);
  }
}

TEST_CASE("weighted_max_norms keeps a larger incoming value") {
  const double m[4] = {1, 0, 0, 1};
  const double w[1] = {1};
  const double x[2] = {3, 4};  // single point (3, 4)
  for (auto isa : {k::Isa::Scalar, k::Isa::Avx2}) {
    if (!k::supported(isa)) continue;
    double out = 10.0;
    k::table(isa).weighted_max_norms(m, w, 1, 2, x, 1, &out);
    CHECK(out == 10.0);
    out = 0.0;
    k::table(isa).weighted_max_norms(m, w, 1, 2, x, 1, &out);
    CHECK(out == doctest::Approx(5.0));
  }
}

TEST_CASE("axpy variants are equivalent") {
  const auto x = random_vec(1001, 3);
  const auto y0 = random_vec(1001, 4);
  auto a = y0, b = y0;
  k::table(k::Isa::Scalar).axpy(0.37, x.data(), a.data(), a.size());
  k::table(k::Isa::Avx2).axpy(0.37, x.data(), b.data(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(rel_err(a[i], b[i]) < 1e-15);
}
