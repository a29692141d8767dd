#include "polylin/cocycle.hpp"

#include <cmath>
#include <mutex>
#include <shared_mutex>
#include <unordered_map>

namespace polylin {

struct Cocycle::Core {
  explicit Core(OperatorSequence s) : seq(std::move(s)) {}

  OperatorSequence seq;
  mutable std::shared_mutex mutex;
  // Key: (level << 56) | offset from origin. Block (k, p) covers [p, p + 2^k).
  mutable std::unordered_map<std::uint64_t, Matrix> forward;
  mutable std::unordered_map<std::uint64_t, Matrix> inverse;

  std::uint64_t key(int level, long p) const {
    return (static_cast<std::uint64_t>(level) << 56) | static_cast<std::uint64_t>(p - seq.origin());
  }

  bool lookup(const std::unordered_map<std::uint64_t, Matrix>& map, std::uint64_t k, Matrix& out) const {
    std::shared_lock lock(mutex);
    auto it = map.find(k);
    if (it == map.end()) return false;
    out = it->second;
    return true;
  }

  void store(std::unordered_map<std::uint64_t, Matrix>& map, std::uint64_t k, const Matrix& m) const {
    std::unique_lock lock(mutex);
    map.emplace(k, m);
  }

  Matrix block(int level, long p) const {
    const auto k = key(level, p);
    Matrix out;
    if (lookup(forward, k, out)) return out;
    if (level == 0) {
      out = seq(p);
    } else {
      const long half = 1L << (level - 1);
      out = block(level - 1, p + half) * block(level - 1, p);
    }
    store(forward, k, out);
    return out;
  }

  Matrix block_inverse(int level, long p) const {
    const auto k = key(level, p);
    Matrix out;
    if (lookup(inverse, k, out)) return out;
    if (level == 0) {
      out = block(0, p).partialPivLu().inverse();
    } else {
      const long half = 1L << (level - 1);
      out = block_inverse(level - 1, p) * block_inverse(level - 1, p + half);
    }
    store(inverse, k, out);
    return out;
  }

  // Largest aligned block starting at p that fits inside [p, end).
  int fit_level(long p, long end) const {
    const long offset = p - seq.origin();
    int level = 0;
    while (level < 40) {
      const long next = 1L << (level + 1);
      if (offset % next != 0 || p + next > end) break;
      ++level;
    }
    return level;
  }

  Matrix evaluate(long m, long n) const {
    const int d = seq.dim();
    if (m == n) return Matrix::Identity(d, d);
    const long lo = std::min(m, n);
    const long hi = std::max(m, n);
    if (lo < seq.origin()) {
      throw Error(ErrorKind::Domain, "cocycle index below origin",
                  seq.name() + ": (m, n) = (" + std::to_string(m) + ", " + std::to_string(n) + ")");
    }
    // The generator at hi - 1 is the last one used; let the sequence police it.
    Matrix r = Matrix::Identity(d, d);
    long p = lo;
    while (p < hi) {
      const int level = fit_level(p, hi);
      if (m > n) r = block(level, p) * r;
      else r = r * block_inverse(level, p);
      p += 1L << level;
    }
    if (!r.allFinite()) {
      throw Error(ErrorKind::Conditioning, "accumulated product overflowed",
                  seq.name() + ": (m, n) = (" + std::to_string(m) + ", " + std::to_string(n) + ")");
    }
    return r;
  }
};

Cocycle::Cocycle(OperatorSequence sequence) : core_(std::make_shared<Core>(std::move(sequence))) {}

double Cocycle::shift_factor(long m, long n) const {
  if (m == n) return 1.0;
  double log_factor = 0.0;
  if (tau_ != 0.0) log_factor -= tau_ * (std::log(static_cast<double>(m)) - std::log(static_cast<double>(n)));
  if (log_rate_ != 0.0) log_factor -= log_rate_ * static_cast<double>(m - n);
  return std::exp(log_factor);
}

Matrix Cocycle::operator()(long m, long n) const {
  Matrix r = core_->evaluate(m, n);
  if (is_shifted()) r *= shift_factor(m, n);
  return r;
}

Matrix Cocycle::step(long n) const {
  Matrix r = core_->block(0, n);
  if (is_shifted()) r *= shift_factor(n + 1, n);
  return r;
}

Matrix Cocycle::step_inverse(long n) const {
  Matrix r = core_->block_inverse(0, n);
  if (is_shifted()) r *= shift_factor(n, n + 1);
  return r;
}

Cocycle Cocycle::polynomial_shift(double tau) const {
  if (origin() < 1) {
    throw Error(ErrorKind::Precondition, "polynomial shift needs natural time", name());
  }
  Cocycle c = *this;
  c.tau_ += tau;
  return c;
}

Cocycle Cocycle::exponential_shift(double rate) const {
  if (!(rate > 0.0)) throw Error(ErrorKind::Domain, "rate must be positive", std::to_string(rate));
  Cocycle c = *this;
  c.log_rate_ += std::log(rate);
  return c;
}

Cocycle Cocycle::unshifted() const {
  Cocycle c = *this;
  c.tau_ = 0.0;
  c.log_rate_ = 0.0;
  return c;
}

const OperatorSequence& Cocycle::sequence() const { return core_->seq; }
int Cocycle::dim() const { return core_->seq.dim(); }
long Cocycle::origin() const { return core_->seq.origin(); }
std::optional<long> Cocycle::last_index() const { return core_->seq.last_index(); }
const std::string& Cocycle::name() const { return core_->seq.name(); }

std::size_t Cocycle::cache_size() const {
  std::shared_lock lock(core_->mutex);
  return core_->forward.size() + core_->inverse.size();
}

OperatorSequence dyadic_blocks(const Cocycle& a, long max_time) {
  if (a.origin() != 1) {
    throw Error(ErrorKind::Precondition, "dyadic blocks need a sequence on natural time", a.name());
  }
  long last = -1;
  while ((1L << (last + 2)) <= max_time) ++last;
  if (last < 0) {
    throw Error(ErrorKind::Horizon, "horizon too short for a single block",
                "max_time=" + std::to_string(max_time));
  }
  return OperatorSequence(a.name() + "/blocks", a.dim(), TimeAxis::Block,
                          [a](long n) { return a(2L << n, 1L << n); }, last, ErrorKind::Horizon,
                          a.sequence().limits());
}

}  // namespace polylin
