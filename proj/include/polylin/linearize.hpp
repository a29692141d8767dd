#pragma once

#include <memory>
#include <string>
#include <vector>

#include "polylin/perturbation.hpp"
#include "polylin/projections.hpp"
#include "polylin/spectrum.hpp"

namespace polylin {

/// Constants feeding the block smallness estimate and the regularity bounds.
struct LinearizationConstants {
  double K = 1.0;  // polynomial dichotomy / growth constant of A
  double a = 0.0;  // polynomial growth exponent of A
  double C = 1.0;  // norm sandwich constant
  double c = 0.0;
  double L = 0.0;
  double epsilon = 0.0;
  double K_block = 1.0;       // exponential dichotomy constant of the blocks
  double lambda_block = 0.0;  // exponential rate of the blocks
};

/// Green operator bound K(1 + e^-lambda)/(1 - e^-lambda) of the blocks.
double green_bound(double K, double lambda);

struct BlockOptions {
  double radius = 1.0;
  int samples_per_block = 32;
  double contraction_budget = 0.9;
  std::uint64_t seed = 0;
};

/// f_n(x) = G(2^{n+1}, 2^n)(x) - B_n x on block time.
class BlockPerturbation {
 public:
  BlockPerturbation(std::shared_ptr<const PerturbedCocycle> g, long max_time);

  Vector map(long n, const Vector& x) const;  // G(2^{n+1}, 2^n)(x)
  /// G(2^{n+1}, 2^n)(x) and f_n(x), the latter accumulated from the g terms
  /// alone so it does not suffer cancellation against B_n x.
  std::pair<Vector, Vector> map_and_forcing(long n, const Vector& x) const;
  Vector invert(long n, const Vector& y) const;
  Vector operator()(long n, const Vector& x) const;
  Matrix jacobian(long n, const Vector& x) const;
  const Matrix& B(long n) const;
  const Matrix& B_inverse(long n) const;

  const PerturbedCocycle& original() const { return *g_; }
  std::shared_ptr<const PerturbedCocycle> original_ptr() const { return g_; }
  const Cocycle& blocks() const { return blocks_; }
  long last_block() const { return last_block_; }
  int dim() const { return g_->dim(); }

  double eta_formula = 0.0;   // (K^2 C 2^{2a+cCK+1}) c
  double eta_sampled = 0.0;   // max ||Df_n(x) v||_{2^{n+1}} / ||v||_{2^n}
  double lipschitz = 0.0;     // K~ 2^{a~}
  double budget = 0.0;        // contraction budget / Green bound
  std::vector<std::string> warnings;

 private:
  std::shared_ptr<const PerturbedCocycle> g_;
  Cocycle blocks_;
  long last_block_;
  std::vector<Matrix> b_, b_inv_;
};

/// Builds the block maps, samples the smallness bound and checks it against
/// the budget. Throws Certification if f_n or Df_n do not vanish at 0 or the
/// sampled bound exceeds the formula, Smallness if eta is over budget.
BlockPerturbation build_block_perturbations(std::shared_ptr<const PerturbedCocycle> g, long max_time,
                                            const LinearizationConstants& k, const NormFamily* norms,
                                            const BlockOptions& opts = {});

struct SolverOptions {
  double tol = 1e-8;
  int max_iter = 200;
  double max_contraction = 0.9;
  double radius = 1.0;  // R_grid
  int grid_per_axis = 9;
  unsigned threads = 0;
};

struct SolverDiagnostics {
  int iterations = 0;          // worst Picard count for the inverse maps
  double contraction = 0.0;    // worst empirical contraction factor
  double residual = 0.0;       // conjugacy residual on the block grid
  double inverse_residual = 0.0;
  std::size_t grid_points = 0;
};

/// Block conjugacies h_n = id + w_n and their inverses, glued to original time.
class ConjugacyAtlas {
 public:
  ConjugacyAtlas(BlockPerturbation f, ProjectionFamily p);

  Vector h(long n, const Vector& x) const;
  /// Inverse by Picard iteration along the linear orbit; reports iterations
  /// and the observed contraction through the optional out-parameters.
  Vector h_inverse(long n, const Vector& y, int* iterations = nullptr, double* contraction = nullptr,
                   double tol = 1e-14, int max_iter = 200) const;

  /// psi_k = A(k, 2^n) o h_n o G(2^n, k) for 2^n <= k < 2^{n+1}.
  Vector psi(long k, const Vector& x) const;
  Vector psi_inverse(long k, const Vector& y) const;

  long last_block() const { return f_.last_block() + 1; }
  long last_time() const { return 1L << last_block(); }
  const BlockPerturbation& blocks() const { return f_; }
  const ProjectionFamily& projections() const { return p_; }
  const SolverDiagnostics& diagnostics() const { return diag_; }
  SolverDiagnostics& diagnostics() { return diag_; }

 private:
  BlockPerturbation f_;
  ProjectionFamily p_;
  std::vector<Matrix> proj_;
  SolverDiagnostics diag_;
  // Bounded solution s of s_{j+1} = B_j s_j + forcing_j on the window.
  std::vector<Vector> green(const std::vector<Vector>& forcing) const;
};

/// Solves the block conjugacy and checks it on a grid of radius R_grid.
ConjugacyAtlas solve_block_conjugacy(const BlockPerturbation& f, const ProjectionFamily& block_projections,
                                     const SolverOptions& opts, const NormFamily* norms = nullptr);

/// Cartesian samples of h_n for export, with multilinear interpolation.
struct GridSamples {
  long block = 0;
  double radius = 0.0;
  int per_axis = 0;
  int dim = 0;
  std::vector<Vector> nodes;
  std::vector<Vector> values;
  Vector interpolate(const Vector& x) const;
};
GridSamples sample_block_grid(const ConjugacyAtlas& atlas, long n, double radius, int per_axis, unsigned threads = 0);

struct ConjugacyCheckOptions {
  double radius = 0.1;
  int per_axis = 9;
  long max_index = 64;
  unsigned threads = 0;
};

struct ConjugacyReport {
  double step_residual = 0.0;   // max ||psi_{n+1}(G_n x) - A_n psi_n(x)||
  double orbit_residual = 0.0;  // max ||psi_n(G(n,1)x) - A(n,1) psi_1(x)||
  double inverse_residual = 0.0;  // max ||psi_k^{-1}(psi_k(x)) - x||
  double gluing_residual = 0.0;   // psi at 2^n against h_n
  std::vector<double> step_by_index;   // indexed by n - 1
  std::vector<double> orbit_by_index;
  std::size_t points = 0;
};

ConjugacyReport verify_conjugacy(const ConjugacyAtlas& atlas, const ConjugacyCheckOptions& opts);

enum class RegularityMode { C1, HolderDiff };

struct RegularityOptions {
  double block_radius = 0.5;  // rho in block norms
  long max_index = 64;
  int points_per_index = 6;
  double fd_step = 1e-6;
  std::vector<double> radii{1e-3, 1e-4, 1e-5, 1e-6};
  double rho_min = 0.05;
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

struct RegularityReport {
  RegularityMode mode = RegularityMode::C1;
  double ball_radius = 0.0;  // rho~ = rho / (C K 2^a)
  double M_block = 0.0;      // sampled max of ||Dh_n||, ||Dh_n^{-1}||
  double M_tilde = 0.0;      // C K^2 M 2^{2a+cCK}
  double M_observed = 0.0;   // sampled max of ||Dpsi_k||, ||Dpsi_k^{-1}||
  bool derivative_bounded = false;
  double diff_slope = 0.0;   // smallest log-log slope of ||psi(x) - x|| at 0
  bool diff_ok = false;
  double alpha1 = 1.0;
  double L_block = 0.0;
  double L_prime = 0.0;      // C^a1 K^{1+a1} L~ 2^{a(1+a1)+cCK a1}
  double holder_observed = 0.0;
  bool holder_ok = false;
  bool ok() const;
};

/// C1 requires sp2 from `gap`; HolderDiff requires sp3.
RegularityReport verify_regularity(const ConjugacyAtlas& atlas, RegularityMode mode, const SpectralGapReport& gap,
                                   const LinearizationConstants& k, const RegularityOptions& opts);

}  // namespace polylin
