#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

// Reference computations that share no code with the library.
namespace oracle {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Chebyshev–Gauss–Lobatto collocation for ż = g(z) on [t1, t2] with one
/// prescribed component at each end. Newton on the full nodal system.
struct ChebyshevBvp {
  std::vector<double> nodes;  // increasing times
  std::vector<Vec> values;
  /// Barycentric interpolation of the nodal values.
  Vec at(double t) const;
};

ChebyshevBvp chebyshev_bvp(const std::function<Vec(const Vec&)>& g, const std::function<Mat(const Vec&)>& jac, int dim,
                           double t1, double t2, int left_index, double left_value, int right_index,
                           double right_value, int n = 48);

/// Convolution system with diagonal semigroup e^{μt}·diag(e^{−λ_j t}) and a
/// scalar input entering mode j with weight b_j. In the sup norm over modes
/// |T0(t)| ≤ e^{μt} and the input-output bound is exactly
/// δ(t) = max_j b_j (e^{(μ−λ_j)t} − 1)/(μ − λ_j).
struct ModeSystem {
  double mu = 0.0;
  std::vector<double> lambda;
  std::vector<double> b;

  double delta(double t) const;
  /// Exact update of the modal state over dt with constant input x.
  void step(std::vector<double>& k, double x, double dt) const;
};

ModeSystem random_mode_system(std::mt19937_64& rng, bool unit_slope);

struct KeyLemmaRun {
  std::vector<double> times;
  std::vector<double> y_norm;
};

/// y(t) = u(t) + (S⋄x)(t) with |u(t)| ≤ a e^{μt} and |x(t)| ≤ β|y(t)|, both
/// drawn at random inside their admissible sets.
KeyLemmaRun simulate_key_lemma(const ModeSystem& m, double a, double beta, double horizon, double dt,
                               std::mt19937_64& rng);

/// K_m = e^{με1}K_{m−1} + b·max{1, e^{μ̂ε1}}δ(ε1)e^{μ̂(m−1)ε1}, K_0 = 0.
double prelem_recursion(double b, double mu_hat, double mu, double delta_eps1, double eps1, int n);

/// |(S⋄x)(nε1)| for a random input with |x(t)| ≤ b e^{μ̂t}.
double prelem_simulation(const ModeSystem& m, double b, double mu_hat, double eps1, int n, std::mt19937_64& rng,
                         int substeps = 400);

/// Bounded 2π-periodic solution z = p cosθ + q sinθ of dz/dθ = κz + η cosθ.
std::pair<double, double> periodic_linear_response(double kappa, double eta);

/// Least-squares slope of log y against x.
double log_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace oracle
