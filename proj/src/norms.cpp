#include "polylin/norms.hpp"

#include "polylin/dichotomy.hpp"
#include "polylin/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <list>
#include <mutex>

namespace polylin {

namespace {

// Packs vectors into the component-major layout used by the kernels.
std::vector<double> pack(const std::vector<Vector>& xs, int d) {
  std::vector<double> soa(static_cast<std::size_t>(d) * xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i)
    for (int k = 0; k < d; ++k) soa[static_cast<std::size_t>(k) * xs.size() + i] = xs[i](k);
  return soa;
}

// Weighted matrices whose maximal image norm is one sup term.
struct Group {
  std::vector<double> mats;
  std::vector<double> weights;
  void add(const Matrix& m, double w) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) mats.push_back(m(r, c));
    weights.push_back(w);
  }
  std::size_t size() const { return weights.size(); }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

class NormFamily::Impl {
 public:
  virtual ~Impl() = default;
  virtual Kind kind() const = 0;
  virtual bool is_euclidean() const { return false; }
  virtual long horizon() const { return 0; }
  virtual double C() const { return 1.0; }
  virtual double delta() const { return 0.0; }
  virtual std::vector<Parts> parts(long n, const std::vector<Vector>& xs) const = 0;
};

namespace {

class EuclideanImpl final : public NormFamily::Impl {
 public:
  NormFamily::Kind kind() const override { return NormFamily::Kind::Constant; }
  bool is_euclidean() const override { return true; }
  std::vector<NormFamily::Parts> parts(long, const std::vector<Vector>& xs) const override {
    std::vector<NormFamily::Parts> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i].stable = xs[i].norm();
    return out;
  }
};

class DyadicImpl final : public NormFamily::Impl {
 public:
  explicit DyadicImpl(NormFamily base) : base_(std::move(base)) {}
  NormFamily::Kind kind() const override { return NormFamily::Kind::Dyadic; }
  bool is_euclidean() const override { return base_.is_euclidean(); }
  long horizon() const override { return base_.horizon(); }
  double C() const override { return base_.sandwich_C(); }
  double delta() const override { return base_.sandwich_delta(); }
  std::vector<NormFamily::Parts> parts(long n, const std::vector<Vector>& xs) const override {
    if (n < 0 || n > 61) throw Error(ErrorKind::Domain, "block index out of range", std::to_string(n));
    return base_.evaluate_parts(1L << n, xs);
  }

 private:
  NormFamily base_;
};

class AdaptedImpl final : public NormFamily::Impl {
 public:
  AdaptedImpl(Cocycle a, ProjectionFamily p, DichotomyConstants c, long horizon, bool polynomial)
      : a_(std::move(a)), p_(std::move(p)), c_(c), horizon_(horizon), polynomial_(polynomial) {}

  NormFamily::Kind kind() const override {
    return polynomial_ ? NormFamily::Kind::AdaptedPolynomial : NormFamily::Kind::AdaptedExponential;
  }
  long horizon() const override { return horizon_; }
  double C() const override { return 2.0 * (c_.K + c_.K * c_.K); }
  double delta() const override { return 2.0 * c_.epsilon; }

  std::vector<NormFamily::Parts> parts(long n, const std::vector<Vector>& xs) const override {
    auto slice = slice_at(n);
    const int d = a_.dim();
    const auto soa = pack(xs, d);
    const std::size_t count = xs.size();
    std::vector<NormFamily::Parts> out(count);
    std::vector<double> head(count), tail(count);
    auto sup = [&](const SliceGroups& g, bool check, const char* label, auto setter) {
      std::fill(head.begin(), head.end(), 0.0);
      std::fill(tail.begin(), tail.end(), 0.0);
      if (g.head.size())
        kernels::weighted_max_norms(g.head.mats.data(), g.head.weights.data(), g.head.size(), d,
                                    soa.data(), count, head.data());
      if (g.tail.size())
        kernels::weighted_max_norms(g.tail.mats.data(), g.tail.weights.data(), g.tail.size(), d,
                                    soa.data(), count, tail.data());
      for (std::size_t i = 0; i < count; ++i) {
        // Round-off in exactly vanishing terms is tolerated relative to |x|.
        const double slack = 1e-12 * std::max(head[i], xs[i].norm());
        if (check && tail[i] > head[i] + slack) {
          throw Error(ErrorKind::Horizon, "adapted-norm supremum still growing at the horizon",
                      std::string(label) + " n=" + std::to_string(n) + " x=" + describe(xs[i]) +
                          " head=" + fmt(head[i]) + " tail=" + fmt(tail[i]));
        }
        setter(out[i], std::max(head[i], tail[i]));
      }
    };
    sup(slice->stable_fwd, slice->fwd_truncated, "stable forward",
        [](NormFamily::Parts& p, double v) { p.stable += v; });
    sup(slice->stable_bwd, slice->bwd_truncated, "stable backward",
        [](NormFamily::Parts& p, double v) { p.stable += v; });
    sup(slice->unstable_bwd, slice->bwd_truncated, "unstable backward",
        [](NormFamily::Parts& p, double v) { p.unstable += v; });
    sup(slice->unstable_fwd, slice->fwd_truncated, "unstable forward",
        [](NormFamily::Parts& p, double v) { p.unstable += v; });
    return out;
  }

 private:
  struct SliceGroups {
    Group head;  // samples before the last quarter of the range
    Group tail;  // last quarter, used for the stabilization check
  };
  struct Slice {
    SliceGroups stable_fwd, stable_bwd, unstable_fwd, unstable_bwd;
    bool fwd_truncated = false;
    bool bwd_truncated = false;
  };

  // Weight for the sup terms, |gap| = |m - n| in exponential time or the
  // ratio max(m,n)/min(m,n) in polynomial time.
  double weight(long m, long n, double exponent) const {
    if (polynomial_) {
      const double ratio = m >= n ? static_cast<double>(m) / n : static_cast<double>(n) / m;
      return std::pow(ratio, exponent);
    }
    return std::exp(exponent * static_cast<double>(std::labs(m - n)));
  }

  std::shared_ptr<const Slice> slice_at(long n) const {
    {
      std::lock_guard lock(cache_mutex_);
      for (auto it = cache_.begin(); it != cache_.end(); ++it) {
        if (it->first == n) {
          cache_.splice(cache_.begin(), cache_, it);
          return cache_.front().second;
        }
      }
    }
    auto slice = build_slice(n);
    std::lock_guard lock(cache_mutex_);
    cache_.emplace_front(n, slice);
    if (cache_.size() > 32) cache_.pop_back();
    return slice;
  }

  std::shared_ptr<const Slice> build_slice(long n) const {
    if (n < a_.origin()) throw Error(ErrorKind::Domain, "norm index below origin", std::to_string(n));
    auto s = std::make_shared<Slice>();
    const Matrix pn = p_(n);
    const Matrix qn = p_.complement(n);
    long hi = n + horizon_;
    if (auto last = a_.last_index()) hi = std::min(hi, *last + 1);
    const long lo = std::max(a_.origin(), n - horizon_);
    s->fwd_truncated = hi == n + horizon_;
    s->bwd_truncated = lo == n - horizon_ && lo > a_.origin();
    const long fwd_split = hi - (hi - n + 1) / 4;
    const long bwd_split = lo + (n - lo) / 4;

    // Forward: m = n .. hi. Stable weight (m/n)^lambda, unstable (m/n)^{-a}.
    Matrix prod = Matrix::Identity(a_.dim(), a_.dim());
    for (long m = n; m <= hi; ++m) {
      if (m > n) prod = a_.step(m - 1) * prod;
      const bool in_tail = m > fwd_split;
      auto& sf = in_tail ? s->stable_fwd.tail : s->stable_fwd.head;
      auto& uf = in_tail ? s->unstable_fwd.tail : s->unstable_fwd.head;
      sf.add(prod * pn, weight(m, n, c_.lambda));
      uf.add(prod * qn, weight(m, n, -c_.a));
    }
    // Backward: m = n-1 .. lo. Stable weight (n/m)^{-a}, unstable (n/m)^lambda.
    prod = Matrix::Identity(a_.dim(), a_.dim());
    for (long m = n - 1; m >= lo; --m) {
      prod = prod * a_.step_inverse(m);
      const bool in_tail = m < bwd_split;
      auto& sb = in_tail ? s->stable_bwd.tail : s->stable_bwd.head;
      auto& ub = in_tail ? s->unstable_bwd.tail : s->unstable_bwd.head;
      sb.add(prod * pn, weight(m, n, -c_.a));
      ub.add(prod * qn, weight(m, n, c_.lambda));
    }
    if (!s->fwd_truncated) {
      // The range ended with the data, not the horizon: nothing to certify.
      merge(s->stable_fwd);
      merge(s->unstable_fwd);
    }
    if (!s->bwd_truncated) {
      merge(s->stable_bwd);
      merge(s->unstable_bwd);
    }
    return s;
  }

  static void merge(SliceGroups& g) {
    g.head.mats.insert(g.head.mats.end(), g.tail.mats.begin(), g.tail.mats.end());
    g.head.weights.insert(g.head.weights.end(), g.tail.weights.begin(), g.tail.weights.end());
    g.tail = Group{};
  }

  Cocycle a_;
  ProjectionFamily p_;
  DichotomyConstants c_;
  long horizon_;
  bool polynomial_;
  mutable std::mutex cache_mutex_;
  mutable std::list<std::pair<long, std::shared_ptr<const Slice>>> cache_;
};

}  // namespace

NormFamily NormFamily::euclidean() { return NormFamily(std::make_shared<EuclideanImpl>()); }

NormFamily NormFamily::dyadic(const NormFamily& base) {
  if (base.kind() == Kind::AdaptedExponential || base.kind() == Kind::Dyadic) {
    throw Error(ErrorKind::Precondition, "dyadic subsampling needs a family on natural time");
  }
  return NormFamily(std::make_shared<DyadicImpl>(base));
}

double NormFamily::operator()(long n, const Vector& x) const { return evaluate(n, {x}).front(); }

std::vector<double> NormFamily::evaluate(long n, const std::vector<Vector>& xs) const {
  const auto parts = impl_->parts(n, xs);
  std::vector<double> out(parts.size());
  for (std::size_t i = 0; i < parts.size(); ++i) out[i] = parts[i].total();
  return out;
}

std::vector<NormFamily::Parts> NormFamily::evaluate_parts(long n, const std::vector<Vector>& xs) const {
  return impl_->parts(n, xs);
}

NormFamily::Kind NormFamily::kind() const { return impl_->kind(); }
bool NormFamily::is_euclidean() const { return impl_->is_euclidean(); }
long NormFamily::horizon() const { return impl_->horizon(); }
double NormFamily::sandwich_C() const { return impl_->C(); }
double NormFamily::sandwich_delta() const { return impl_->delta(); }

double NormFamily::sandwich_bound(long n) const {
  const double c = sandwich_C();
  const double delta = sandwich_delta();
  if (delta == 0.0) return c;
  if (kind() == Kind::AdaptedExponential) return c * std::exp(delta * std::labs(n));
  return c * std::pow(static_cast<double>(std::max(1L, n)), delta);
}

namespace {

void require_dichotomy(const DichotomyEstimate& est, const char* what) {
  if (est.verdict != Verdict::Accepted) {
    throw Error(ErrorKind::Precondition, std::string(what) + ": dichotomy verification rejected",
                est.diagnostics.reason);
  }
}

long verification_window(const Cocycle& a, long horizon, long cap) {
  long w = std::min(horizon, cap);
  if (auto last = a.last_index()) w = std::min(w, *last + 1);
  return w;
}

}  // namespace

NormFamily adapted_polynomial_norms(const Cocycle& a, const ProjectionFamily& p,
                                    const DichotomyConstants& constants, long horizon) {
  VerifyOptions opts;
  opts.window = verification_window(a, horizon, 1024);
  require_dichotomy(verify_polynomial_dichotomy(a, p, nullptr, opts), "adapted polynomial norms");
  return NormFamily(std::make_shared<AdaptedImpl>(a, p, constants, horizon, true));
}

NormFamily adapted_exponential_norms(const Cocycle& b, const ProjectionFamily& p,
                                     const DichotomyConstants& constants, long horizon) {
  VerifyOptions opts;
  opts.window = verification_window(b, horizon, 64);
  require_dichotomy(verify_exponential_dichotomy(b, p, nullptr, opts), "adapted exponential norms");
  return NormFamily(std::make_shared<AdaptedImpl>(b, p, constants, horizon, false));
}

}  // namespace polylin
