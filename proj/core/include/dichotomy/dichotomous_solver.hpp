#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dichotomy/correspondence.hpp"
#include "dichotomy/linalg_splitting.hpp"
#include "dichotomy/types.hpp"

namespace dichotomy {

/// out ← f(t, z). `out` arrives sized to dim_total.
using Nonlinearity = std::function<void(double t, const Vec& z, Vec& out)>;

/// Base dynamics of the evolution equation. With a scalar driver the
/// generator at time t is a(t)·A; phases of periodic bases wrap modulo the
/// period inside the problem's own functions.
struct BaseDynamics {
  enum class Kind { Point, Periodic, Driver };
  Kind kind = Kind::Point;
  double period = 0.0;
  std::function<double(double)> driver;
  /// ∫_{t1}^{t2} a(s) ds; quadrature fallback when empty.
  std::function<double(double, double)> driver_integral;
  double driver_min = 1.0;
  double driver_max = 1.0;

  bool constant() const { return !driver; }
  double increment(double t1, double t2) const;
};

/// ż = a(t)·A z + f(t, z) with a fixed splitting of A.
struct EvolutionProblem {
  std::string id;
  Mat generator;
  SpectralSplitting splitting;
  Nonlinearity nonlinearity;  // empty means f ≡ 0
  double eps = 0.0;           // ambient Lipschitz bound of f
  double eps_s = 0.0;         // Lip of coord_x·f against max(|Δx|, |Δy|)
  double eps_u = 0.0;         // Lip of coord_y·f against max(|Δx|, |Δy|)
  double lipschitz_radius = 0.0;  // ball where eps is certified; 0 means global
  BaseDynamics base;
  bool well_posed = true;

  int dim() const { return splitting.dim_total; }
  /// Certified log-rates including the driver range.
  double rate_s() const;
  double rate_u() const;
};

/// Block constants from an ambient bound: |Δz| ≤ ‖[Bx By]‖·√2·max(|Δx|, |Δy|).
std::pair<double, double> block_lipschitz(const SpectralSplitting& s, double eps);

struct SolverOptions {
  double steps_per_unit = 200.0;
  int min_steps = 8;
  double tol = 1e-12;
  int max_iter = 200;
  int steps_for(double duration) const;
};

struct DichotomousTrajectory {
  std::vector<double> times;
  Mat x;  // dim_x × (N+1)
  Mat y;  // dim_y × (N+1)
  Mat z;  // dim_total × (N+1)
  int iteration_count = 0;
  double picard_residual = 0.0;
  double mild_residual = -1.0;  // set by verify_mild_solution
  double kappa = 0.0;
  std::vector<double> increments;

  std::string to_csv() const;
  std::string report_json() const;
};

/// Discrete operator-norm bound κ of the Picard map on [t1, t2].
double picard_contraction_estimate(const EvolutionProblem& p, double t1, double t2, int grid_n);

/// Forward-stable / backward-unstable integral system:
///   x(t) = T(t,t1)x1 + ∫_{t1}^{t} T(t,s)Πx f ds,
///   y(t) = S(t,t2)y2 − ∫_{t}^{t2} S(t,s)Πy f ds,
/// composite trapezoid with exact step propagators, Picard iteration.
DichotomousTrajectory solve_two_point(const EvolutionProblem& p, const Vec& x1, const Vec& y2, double t1, double t2,
                                      int grid_n, double tol, int max_iter);

/// (x(s), y(0)) of the two-point solution on [ω, ω + s]; identity at s = 0.
std::pair<Vec, Vec> generating_cocycle_eval(const EvolutionProblem& p, double s, double omega, const Vec& x1,
                                            const Vec& y2, const SolverOptions& opts = {});

/// H(s, ω) as a generating correspondence.
GeneratingCorrespondence cocycle_correspondence(const EvolutionProblem& p, double s, double omega,
                                                const SolverOptions& opts = {});

/// sup_j |z(τ_j) − z(τ_0) − ∫ (a A z + f)| with cumulative trapezoid sums.
double verify_mild_solution(DichotomousTrajectory& traj, const EvolutionProblem& p, double tol);

/// Forward cocycle U(t, ω)x of a well-posed problem, by variation of
/// constants on subintervals short enough for Picard contraction.
Vec wellposed_cocycle_eval(const EvolutionProblem& p, double t, double omega, const Vec& x,
                           const SolverOptions& opts = {});

struct LipschitzEstimate {
  double ambient = 0.0;
  double block_s = 0.0;
  double block_u = 0.0;
  bool finite = true;
};

/// Finite-difference estimate of Lip f on random pairs in a ball.
LipschitzEstimate estimate_nonlinearity_lipschitz(const EvolutionProblem& p, double radius, std::size_t n_pairs,
                                                  std::uint64_t seed, double t = 0.0);

}  // namespace dichotomy
