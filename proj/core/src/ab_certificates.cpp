#include "dichotomy/ab_certificates.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dichotomy/error.hpp"
#include "json_util.hpp"

namespace dichotomy {

namespace {

double default_weight(double threshold) { return threshold > 0 ? std::sqrt(threshold) : 0.5; }

/// ((σ − ε/h)e^{−σt} + ε/h)/σ, the decay of the cone ratio |x|/|y| ≤ h.
double cone_factor(double sigma, double eps, double h, double t) {
  if (!std::isfinite(sigma)) return t > 0 ? 0.0 : 1.0;  // empty Y: the cone collapses at once
  if (eps == 0.0) return std::exp(-sigma * t);
  return ((sigma - eps / h) * std::exp(-sigma * t) + eps / h) / sigma;
}

detail::json cert_json(const ABCertificate& c) {
  using detail::real_to_json;
  detail::json j;
  j["mu_s"] = real_to_json(c.mu_s);
  j["mu_u"] = real_to_json(c.mu_u);
  j["eps_s"] = c.eps_s;
  j["eps_u"] = c.eps_u;
  j["alpha_min"] = c.alpha_min;
  j["beta_min"] = c.beta_min;
  j["alpha"] = c.alpha;
  j["beta"] = c.beta;
  j["lambda_s"] = c.lambda_s;
  j["lambda_u"] = c.lambda_u;
  j["k_alpha"] = c.k_alpha;
  j["k_beta"] = c.k_beta;
  j["gap_sigma"] = real_to_json(c.gap_sigma);
  j["eps1"] = c.eps1;
  j["c"] = c.c;
  return j;
}

}  // namespace

double ABCertificate::k_alpha_at(double t) const { return cone_factor(mu_u - mu_s - eps_u, eps_s, alpha, t); }

double ABCertificate::k_beta_at(double t) const { return cone_factor(mu_u - mu_s - eps_s, eps_u, beta, t); }

ABConstants ABCertificate::constants_at(double t) const {
  if (t < 0) throw Error(ErrorKind::NegativeTime, "certificate time must be nonnegative", t);
  ABConstants k;
  k.alpha = alpha;
  k.beta = beta;
  k.alpha_prime = alpha * k_alpha_at(t);
  k.beta_prime = beta * k_beta_at(t);
  k.lambda_s = std::pow(lambda_s, t);
  k.lambda_u = std::pow(lambda_u, t);
  return k;
}

ABCertificate ABCertificate::dual() const {
  ABCertificate d = *this;
  // the dual flips time: X of the dual is Y, with rates −μu and −μs
  d.mu_s = -mu_u;
  d.mu_u = -mu_s;
  d.eps_s = eps_u;
  d.eps_u = eps_s;
  d.alpha_min = beta_min;
  d.beta_min = alpha_min;
  d.alpha = beta;
  d.beta = alpha;
  d.lambda_s = lambda_u;
  d.lambda_u = lambda_s;
  d.k_alpha = k_beta;
  d.k_beta = k_alpha;
  return d;
}

std::string ABCertificate::to_json() const { return cert_json(*this).dump(2); }

ABCertificate gap_certificate(double mu_s, double mu_u, double eps_s, double eps_u, std::optional<double> alpha,
                              std::optional<double> beta, double eps1) {
  if (eps_s < 0 || eps_u < 0 || eps1 < 0) throw Error(ErrorKind::ParamOutOfRange, "negative eps or eps1");
  const double gap = mu_u - mu_s - eps_s - eps_u;
  if (!(gap > 0)) throw Error(ErrorKind::GapViolated, "mu_u - mu_s - eps_s - eps_u must be positive", gap);
  ABCertificate c;
  c.mu_s = mu_s;
  c.mu_u = mu_u;
  c.eps_s = eps_s;
  c.eps_u = eps_u;
  c.eps1 = eps1;
  c.gap_sigma = gap;
  c.alpha_min = eps_s / (mu_u - mu_s - eps_u);
  c.beta_min = eps_u / (mu_u - mu_s - eps_s);
  auto pick = [](std::optional<double> v, double threshold, const char* name) {
    if (!v) return default_weight(threshold);
    // equality allowed only in the unperturbed case
    if (!(*v > threshold || (threshold == 0.0 && *v > 0)) || !(*v < 1.0))
      throw Error(ErrorKind::AlphaBelowThreshold, std::string(name) + " outside (threshold, 1)", *v - threshold);
    return *v;
  };
  c.alpha = pick(alpha, c.alpha_min, "alpha");
  c.beta = pick(beta, c.beta_min, "beta");
  c.lambda_s = std::exp(mu_s + eps_s);
  c.lambda_u = std::exp(-mu_u + eps_u);
  c.k_alpha = c.k_alpha_at(eps1);
  c.k_beta = c.k_beta_at(eps1);
  return c;
}

CocycleCertificateTable cocycle_gap_certificate(const std::vector<RateEntry>& rates, double c1, CocycleMode mode,
                                                double c, double eps1) {
  if (rates.empty()) throw Error(ErrorKind::EmptyTable, "rate table is empty");
  if (c < 1.0) throw Error(ErrorKind::ParamOutOfRange, "cocycle constant c must be at least 1", c);
  CocycleCertificateTable t;
  t.entries = rates;
  t.c = c;
  t.uniform_margin = std::numeric_limits<double>::infinity();
  double sup_alpha_min = 0.0, sup_beta_min = 0.0;
  for (std::size_t i = 0; i < rates.size(); ++i) {
    const auto& r = rates[i];
    const double e = mode == CocycleMode::BiSemigroup ? 2.0 * c1 * r.eps : r.eps;
    t.eps_effective.push_back(e);
    try {
      auto cert = gap_certificate(r.mu_s, r.mu_u, e, e, std::nullopt, std::nullopt, eps1);
      cert.c = c;
      sup_alpha_min = std::max(sup_alpha_min, cert.alpha_min);
      sup_beta_min = std::max(sup_beta_min, cert.beta_min);
      t.sup_lambda_product = std::max(t.sup_lambda_product, cert.lambda_s * cert.lambda_u);
      t.per_omega.push_back(cert);
      t.per_omega_failure.emplace_back();
    } catch (const Error& err) {
      t.per_omega.emplace_back(std::nullopt);
      t.per_omega_failure.emplace_back(err.what());
    }
    const double margin = r.mu_u - r.mu_s - (1.0 + c) * e;
    t.uniform_margin = std::min(t.uniform_margin, margin);
    if (!(margin > 0) && !t.first_failure) {
      t.first_failure = i;
      t.failing_clause = "inf_omega mu_u - mu_s - (1 + c) eps' > 0 fails at omega = " + detail::real_to_json(r.omega).dump();
    }
  }
  t.uniform_ok = !t.first_failure;
  if (t.uniform_ok) {
    ABCertificate g;
    g.c = c;
    g.eps1 = eps1;
    g.alpha_min = sup_alpha_min;
    g.beta_min = sup_beta_min;
    g.alpha = default_weight(sup_alpha_min);
    g.beta = default_weight(sup_beta_min);
    double ls = 0.0, lu = 0.0, ka = 0.0, kb = 0.0;
    g.gap_sigma = std::numeric_limits<double>::infinity();
    g.mu_s = -std::numeric_limits<double>::infinity();
    g.mu_u = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < rates.size(); ++i) {
      const auto& cert = *t.per_omega[i];
      ls = std::max(ls, cert.lambda_s);
      lu = std::max(lu, cert.lambda_u);
      g.gap_sigma = std::min(g.gap_sigma, cert.gap_sigma);
      g.mu_s = std::max(g.mu_s, cert.mu_s);
      g.mu_u = std::min(g.mu_u, cert.mu_u);
      g.eps_s = std::max(g.eps_s, cert.eps_s);
      g.eps_u = std::max(g.eps_u, cert.eps_u);
      auto at = cert;
      at.alpha = g.alpha;
      at.beta = g.beta;
      ka = std::max(ka, at.k_alpha_at(eps1));
      kb = std::max(kb, at.k_beta_at(eps1));
    }
    g.lambda_s = ls;
    g.lambda_u = lu;
    g.k_alpha = ka;
    g.k_beta = kb;
    t.global = g;
  }
  return t;
}

std::string CocycleCertificateTable::to_json() const {
  detail::json j;
  j["c"] = c;
  j["uniform_ok"] = uniform_ok;
  j["uniform_margin"] = detail::real_to_json(uniform_margin);
  j["first_failure"] = first_failure ? detail::json(*first_failure) : detail::json(nullptr);
  j["failing_clause"] = failing_clause;
  j["sup_lambda_product"] = sup_lambda_product;
  detail::json rows = detail::json::array();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    detail::json row;
    row["omega"] = detail::real_to_json(entries[i].omega);
    row["eps_effective"] = eps_effective[i];
    if (per_omega[i]) row["certificate"] = cert_json(*per_omega[i]);
    else row["failure"] = per_omega_failure[i];
    rows.push_back(row);
  }
  j["per_omega"] = rows;
  if (global) j["global"] = cert_json(*global);
  return j.dump(2);
}

void MRProfile::validate() const {
  if (!delta_fn) throw Error(ErrorKind::ParamOutOfRange, "delta function missing");
  if (beta < 0) throw Error(ErrorKind::ParamOutOfRange, "beta must be nonnegative", beta);
  if (!(sigma > 0 && sigma <= 0.5)) throw Error(ErrorKind::ParamOutOfRange, "sigma must lie in (0, 1/2]", sigma);
  double prev = std::numeric_limits<double>::infinity();
  for (int e = 1; e <= 6; ++e) {
    const double d = delta_fn(std::pow(10.0, -e));
    if (!std::isfinite(d) || d < 0 || d > prev)
      throw Error(ErrorKind::ParamOutOfRange, "delta is not increasing and nonnegative on samples");
    prev = d;
  }
  if (!(prev <= 0.5 * delta_fn(1e-1)))
    throw Error(ErrorKind::ParamOutOfRange, "delta does not tend to 0 on samples", prev);
}

KeyLemmaConstants keylem_constants(const MRProfile& p) {
  p.validate();
  KeyLemmaConstants out;
  if (p.beta == 0.0) {
    out.linear_case = true;
    return out;
  }
  bool linear = true;
  for (double t : {1e-4, 1e-5, 1e-6}) linear = linear && std::abs(p.delta_fn(t) / t - 1.0) <= 0.01;
  if (linear) {
    out.lambda = p.beta;
    out.linear_case = true;
    return out;
  }
  auto big_k = [&](double e) { return std::exp(p.sigma) * p.delta_fn(e) * p.beta * std::max(std::exp(-p.mu * e), 1.0); };
  auto admissible = [&](double e) { return big_k(2.0 * e) < p.sigma && p.beta * p.delta_fn(e) < 1.0; };
  double lo = 0.0, hi = 10.0;
  if (admissible(hi)) {
    lo = hi;
  } else {
    // smallest probe 1e-12 decides existence
    if (!admissible(1e-12)) throw Error(ErrorKind::NoAdmissibleEpsHat, "no eps_hat in (0, 10] with K(2 eps_hat) < sigma");
    lo = 1e-12;
    for (int i = 0; i < 200 && hi - lo > 1e-14 * hi; ++i) {
      const double mid = 0.5 * (lo + hi);
      (admissible(mid) ? lo : hi) = mid;
    }
  }
  const double eh = lo;
  double lam = 0.0;
  const int samples = 2000;
  for (int i = 0; i <= samples; ++i) {
    const double e = eh * (1.0 + static_cast<double>(i) / samples);
    lam = std::max(lam, big_k(e) / e);
  }
  out.eps_hat = eh;
  out.lambda = lam;
  out.k = std::max(1.0, std::exp(-p.mu * eh)) / (1.0 - p.beta * p.delta_fn(eh));
  return out;
}

double prelem_bound(double b, double mu_hat, double mu, double delta_eps1, double eps1, int n) {
  if (n < 1) throw Error(ErrorKind::ParamOutOfRange, "n must be at least 1", n);
  const double head = b * std::max(1.0, std::exp(mu_hat * eps1)) * delta_eps1 * std::exp(mu * (n - 1) * eps1);
  const double d = (mu_hat - mu) * eps1;
  if (std::abs(d) < 1e-12) return head * n;
  return head * std::expm1(d * n) / std::expm1(d);
}

}  // namespace dichotomy
