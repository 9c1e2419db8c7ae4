#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dichotomy/correspondence.hpp"

namespace dichotomy {

/// Closed-form (A)(B) constants of a spectral gap with block perturbations.
struct ABCertificate {
  double mu_s = 0.0, mu_u = 0.0, eps_s = 0.0, eps_u = 0.0;
  double alpha_min = 0.0, beta_min = 0.0;
  double alpha = 0.5, beta = 0.5;
  double lambda_s = 1.0, lambda_u = 1.0;  // per unit time
  double k_alpha = 1.0, k_beta = 1.0;     // cone contraction after eps1
  double gap_sigma = 0.0;                 // μu − μs − eps_s − eps_u
  double eps1 = 1.0;
  double c = 1.0;

  /// Cone contraction factors after elapsed time t ≥ 0 (1 at t = 0).
  double k_alpha_at(double t) const;
  double k_beta_at(double t) const;
  /// Constants of the time-t correspondence: λ^t and α′ = k_α(t)·α.
  ABConstants constants_at(double t) const;
  /// Certificate of the dual correspondence (roles of X and Y swapped).
  ABCertificate dual() const;
  std::string to_json() const;
};

/// alpha/beta default to the geometric midpoint of [threshold, 1), or 1/2
/// when the threshold vanishes.
ABCertificate gap_certificate(double mu_s, double mu_u, double eps_s, double eps_u,
                              std::optional<double> alpha = std::nullopt, std::optional<double> beta = std::nullopt,
                              double eps1 = 1.0);

struct RateEntry {
  double omega = 0.0;  // label of the base point
  double mu_s = 0.0, mu_u = 0.0, eps = 0.0;
};

enum class CocycleMode { BiSemigroup, MaxNormCocycle };

struct CocycleCertificateTable {
  std::vector<RateEntry> entries;
  std::vector<std::optional<ABCertificate>> per_omega;  // nullopt where the pointwise gap fails
  std::vector<double> eps_effective;
  std::vector<std::string> per_omega_failure;
  double c = 1.0;
  bool uniform_ok = false;
  double uniform_margin = 0.0;           // inf_ω μu − μs − (1 + c)ε′
  std::optional<std::size_t> first_failure;  // first ω whose (1 + c)-gap fails
  std::string failing_clause;
  std::optional<ABCertificate> global;   // constant α, β over the table
  double sup_lambda_product = 0.0;

  std::string to_json() const;
};

/// ε′ = 2·c1·ε in bi-semigroup mode, ε′ = ε for max-norm cocycles.
CocycleCertificateTable cocycle_gap_certificate(const std::vector<RateEntry>& rates, double c1, CocycleMode mode,
                                                double c = 1.0, double eps1 = 1.0);

struct MRProfile {
  std::function<double(double)> delta_fn;
  double mu = 0.0;
  double beta = 0.0;
  double sigma = 0.5;

  /// Throws ParamOutOfRange when δ is not increasing towards 0 on samples.
  void validate() const;
};

struct KeyLemmaConstants {
  double lambda = 0.0;
  double k = 1.0;
  double eps_hat = 0.0;  // 0 in the linear-modulus case
  bool linear_case = false;
};

/// Constants of the scalar inequality y ≤ a e^{μt} + β·(δ-modulated memory).
KeyLemmaConstants keylem_constants(const MRProfile& profile);

/// Closed-form bound on K_n from K_m ≤ e^{με1}K_{m−1} + b·max{1,e^{μ̂ε1}}δ(ε1)e^{μ̂(m−1)ε1}.
double prelem_bound(double b, double mu_hat, double mu, double delta_eps1, double eps1, int n);

}  // namespace dichotomy
