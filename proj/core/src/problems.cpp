#include "dichotomy/problems.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "dichotomy/error.hpp"
#include "json_util.hpp"

namespace dichotomy {

namespace {

constexpr double kPi = std::numbers::pi;

const std::map<std::string, std::vector<ParamRange>>& catalog() {
  static const std::map<std::string, std::vector<ParamRange>> c = {
      {"scalar_saddle",
       {{"radius", 0.5, 0.005, 2.0, false, "ball |x| <= radius on which x^2 is kept; eps = 2 radius"}}},
      {"elliptic_cylinder",
       {{"modes", 3, 1, 16, true, "Dirichlet sine modes on [0,1]"},
        {"gamma", 0.05, 0.0, 0.5, false, "f(u) = gamma sin(u), Lipschitz gamma"}}},
      {"spatial_rd",
       {{"modes", 5, 1, 12, true, "temporal Fourier modes 0..modes-1"},
        {"d", 1.0, 0.1, 10.0, false, "diffusion coefficient"},
        {"c", 0.5, -5.0, 5.0, false, "advection speed"},
        {"r", 1.0, 0.05, 10.0, false, "linear damping of the reaction term"},
        {"period", 2 * kPi, 0.5, 100.0, false, "temporal period T"},
        {"gamma", 0.02, 0.0, 0.5, false, "reaction gamma sin(u)"}}},
      {"nonauto_scalar",
       {{"delta", 0.5, 0.0, 0.9, false, "driver a(t) = 1 + delta sin(nu t)"},
        {"nu", 1.0, 0.0, 10.0, false, "driver frequency"},
        {"eps", 0.1, 0.0, 0.45, false, "nonlinearity eps sin(z)"},
        {"forcing", 0.0, 0.0, 0.1, false, "bounded forcing forcing cos(t) (1, 1)"}}},
      {"nhim_circle",
       {{"eta", 1e-2, 0.0, 0.05, false, "forcing eta cos(theta) in the z equation"},
        {"samples", 64, 8, 1024, true, "base samples on the circle"}}},
      {"boussinesq_trunc",
       {{"modes", 3, 1, 8, true, "Fourier wave numbers 1..modes on the circle"},
        {"alpha", 0.3, 0.01, 10.0, false, "dispersion coefficient"},
        {"radius", 5e-4, 1e-5, 1e-3, false, "retraction radius of the u-coefficients; the gap fails above 1e-3"}}},
  };
  return c;
}

std::string fixed_name(double v) { return detail::json(v).dump(); }

/// Flips basis columns so each one's largest entry is positive.
void canonical_signs(SpectralSplitting& s) {
  auto fix = [](Mat& basis, Mat& coord, Mat& gen) {
    for (Eigen::Index j = 0; j < basis.cols(); ++j) {
      Eigen::Index i;
      basis.col(j).cwiseAbs().maxCoeff(&i);
      if (basis(i, j) >= 0) continue;
      basis.col(j) *= -1;
      coord.row(j) *= -1;
      gen.row(j) *= -1;
      gen.col(j) *= -1;
    }
  };
  fix(s.basis_x, s.coord_x, s.restricted_gen_x);
  fix(s.basis_y, s.coord_y, s.restricted_gen_y);
}

/// Spectral split followed by a Lyapunov reweighting when the Schur blocks
/// are far from normal.
SpectralSplitting split_for(const Mat& a, double cut) {
  SpectralSplitting s = spectral_split(a, cut);
  const double gap = (s.dim_x() && s.dim_y()) ? spectral_abscissa(-s.restricted_gen_y) : 1.0;
  const double margin = 0.05 * std::max(1e-3, std::abs(gap));
  const bool drift_x = s.dim_x() && s.mu_s > spectral_abscissa(s.restricted_gen_x) + margin;
  const bool drift_y = s.dim_y() && -s.mu_u > spectral_abscissa(-s.restricted_gen_y) + margin;
  if (drift_x || drift_y) s = lyapunov_reweight(s, margin);
  canonical_signs(s);
  return s;
}

/// Orthonormal sine transform: values = S·coeffs on the interior nodes.
Mat dirichlet_basis(int n) {
  Mat s(n, n);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k) s(j, k) = std::sqrt(2.0 / (n + 1)) * std::sin((k + 1) * kPi * (j + 1) / (n + 1));
  return s;
}

/// Orthonormal real Fourier columns on m equispaced nodes: the constant
/// (optional) then (cos kt, sin kt) for k = 1..kmax.
Mat fourier_basis(int m, int kmax, bool constant) {
  Mat f(m, 2 * kmax + (constant ? 1 : 0));
  for (int j = 0; j < m; ++j) {
    const double t = 2 * kPi * j / m;
    int c = 0;
    if (constant) f(j, c++) = 1.0 / std::sqrt(double(m));
    for (int k = 1; k <= kmax; ++k) {
      f(j, c++) = std::sqrt(2.0 / m) * std::cos(k * t);
      f(j, c++) = std::sqrt(2.0 / m) * std::sin(k * t);
    }
  }
  return f;
}

Vec retract(const Vec& v, double r) {
  const double n = v.norm();
  return n > r ? Vec(v * (r / n)) : v;
}

void finish_eps(ProblemDescriptor& d, double eps) {
  d.problem.eps = eps;
  const auto [es, eu] = block_lipschitz(d.problem.splitting, eps);
  d.problem.eps_s = es;
  d.problem.eps_u = eu;
}

ProblemDescriptor scalar_saddle(const ProblemParams& p) {
  ProblemDescriptor d;
  const double r = p.at("radius");
  d.description = "x' = x, y' = -y + x^2 with x^2 frozen outside |x| <= radius";
  Mat a(2, 2);
  a << 1, 0, 0, -1;
  d.problem.generator = a;
  d.problem.splitting = split_for(a, 0.0);
  d.problem.nonlinearity = [r](double, const Vec& z, Vec& out) {
    const double x = std::clamp(z(0), -r, r);
    out(0) = 0.0;
    out(1) = x * x;
  };
  // coordinate-aligned split: only the stable row carries the nonlinearity
  d.problem.eps = 2 * r;
  d.problem.eps_s = 2 * r;
  d.problem.eps_u = 0.0;
  d.retraction_radius = r;
  d.check_radius = r;
  d.modes = 1;
  d.mode_rates = {{1, -1.0, 1.0, true}};
  d.oracle.kind = ProblemOracle::Kind::PlanarGraphs;
  d.oracle.formula = "unstable: y = x^2/3, stable: x = 0";
  d.oracle.unstable_graph = [](double x) { return x * x / 3.0; };
  d.oracle.stable_graph = [](double) { return 0.0; };
  d.oracle.domain = r;
  return d;
}

ProblemDescriptor elliptic_cylinder(const ProblemParams& p) {
  ProblemDescriptor d;
  const int n = static_cast<int>(p.at("modes"));
  const double gamma = p.at("gamma");
  d.description = "u_tt + u_xx + gamma sin(u) = 0 on [0,1], Dirichlet, sine Galerkin";
  // state: (u_1, v_1, ..., u_n, v_n)
  Mat a = Mat::Zero(2 * n, 2 * n);
  for (int k = 1; k <= n; ++k) {
    const int i = 2 * (k - 1);
    a(i, i + 1) = 1.0;
    a(i + 1, i) = (k * kPi) * (k * kPi);
    d.mode_rates.push_back({k, -k * kPi, k * kPi, true});
  }
  d.problem.generator = a;
  d.problem.splitting = split_for(a, 0.0);
  const Mat s = dirichlet_basis(n);
  d.problem.nonlinearity = [n, gamma, s](double, const Vec& z, Vec& out) {
    Vec u(n);
    for (int k = 0; k < n; ++k) u(k) = z(2 * k);
    const Vec vals = s * u;
    const Vec coeff = s.transpose() * vals.unaryExpr([gamma](double v) { return gamma * std::sin(v); });
    out.setZero();
    for (int k = 0; k < n; ++k) out(2 * k + 1) = -coeff(k);
  };
  finish_eps(d, gamma);  // orthogonal transforms around a gamma-Lipschitz pointwise map
  d.modes = n;
  d.problem.well_posed = false;
  d.check_radius = 0.5;
  return d;
}

ProblemDescriptor spatial_rd(const ProblemParams& p) {
  ProblemDescriptor d;
  const int n = static_cast<int>(p.at("modes"));
  const double dd = p.at("d"), c = p.at("c"), r = p.at("r"), period = p.at("period"), gamma = p.at("gamma");
  d.description = "spatial dynamics of u_t = d u_xx + c u_x - r u + gamma sin(u), T-periodic in t";
  // per temporal mode m: u' = v, v' = ((r + ∂t)u - c v)/d - gamma sin(u)/d; ∂t is a 2x2 rotation for m ≥ 1
  const int dim = 2 + 4 * (n - 1);
  Mat a = Mat::Zero(dim, dim);
  a(0, 1) = 1.0;
  a(1, 0) = r / dd;
  a(1, 1) = -c / dd;
  {
    const double disc = std::sqrt(c * c + 4 * dd * r);
    d.mode_rates.push_back({0, (-c - disc) / (2 * dd), (-c + disc) / (2 * dd), true});
  }
  for (int m = 1; m < n; ++m) {
    const double w = 2 * kPi * m / period;
    const int i = 2 + 4 * (m - 1);  // (ua, ub, va, vb)
    a(i, i + 2) = 1.0;
    a(i + 1, i + 3) = 1.0;
    Mat rot(2, 2);
    rot << r, w, -w, r;
    a.block(i + 2, i, 2, 2) = rot / dd;
    a(i + 2, i + 2) = -c / dd;
    a(i + 3, i + 3) = -c / dd;
    // roots of d λ² + c λ − (r + iω) = 0
    const std::complex<double> disc = std::sqrt(std::complex<double>(c * c + 4 * dd * r, 4 * dd * w));
    const double l1 = ((-c - disc) / (2 * dd)).real(), l2 = ((-c + disc) / (2 * dd)).real();
    d.mode_rates.push_back({m, std::min(l1, l2), std::max(l1, l2), true});
  }
  const int grid = std::max(1, 2 * n - 1);
  if (!(2 * (n - 1) < grid)) throw Error(ErrorKind::ParamOutOfRange, "temporal grid too small");
  d.problem.generator = a;
  d.problem.splitting = split_for(a, 0.0);
  const Mat f = fourier_basis(grid, n - 1, true);
  d.problem.nonlinearity = [n, dd, gamma, f](double, const Vec& z, Vec& out) {
    // coefficients ordered (a0, a1, b1, a2, b2, ...)
    Vec u(2 * n - 1);
    u(0) = z(0);
    for (int m = 1; m < n; ++m) {
      const int i = 2 + 4 * (m - 1);
      u(2 * m - 1) = z(i);
      u(2 * m) = z(i + 1);
    }
    const Vec coeff = f.transpose() * (f * u).unaryExpr([gamma](double v) { return gamma * std::sin(v); });
    out.setZero();
    out(1) = -coeff(0) / dd;
    for (int m = 1; m < n; ++m) {
      const int i = 2 + 4 * (m - 1);
      out(i + 2) = -coeff(2 * m - 1) / dd;
      out(i + 3) = -coeff(2 * m) / dd;
    }
  };
  finish_eps(d, gamma / dd);
  d.modes = n;
  d.problem.well_posed = false;
  d.check_radius = 0.5;
  return d;
}

ProblemDescriptor nonauto_scalar(const ProblemParams& p) {
  ProblemDescriptor d;
  const double delta = p.at("delta"), nu = p.at("nu"), eps = p.at("eps"), forcing = p.at("forcing");
  d.description = "z' = a(t) A z + eps sin(z) + forcing cos(t)(1,1), A = diag(-1, 1), a = 1 + delta sin(nu t)";
  Mat a(2, 2);
  a << -1, 0, 0, 1;
  d.problem.generator = a;
  d.problem.splitting = split_for(a, 0.0);
  d.problem.nonlinearity = [eps, forcing](double t, const Vec& z, Vec& out) {
    const double fc = forcing * std::cos(t);
    out(0) = eps * std::sin(z(0)) + fc;
    out(1) = eps * std::sin(z(1)) + fc;
  };
  d.problem.eps = eps;
  d.problem.eps_s = eps;  // the sine acts coordinate-wise
  d.problem.eps_u = eps;
  auto& b = d.problem.base;
  if (delta > 0 && nu > 0) {
    b.kind = BaseDynamics::Kind::Driver;
    b.period = 2 * kPi / nu;
    b.driver = [delta, nu](double t) { return 1.0 + delta * std::sin(nu * t); };
    b.driver_integral = [delta, nu](double t1, double t2) {
      return (t2 - t1) - delta / nu * (std::cos(nu * t2) - std::cos(nu * t1));
    };
    b.driver_min = 1.0 - delta;
    b.driver_max = 1.0 + delta;
  }
  d.modes = 1;
  d.mode_rates = {{1, -b.driver_min, b.driver_min, true}};
  d.check_radius = 0.5;
  return d;
}

ProblemDescriptor nhim_circle(const ProblemParams& p) {
  ProblemDescriptor d;
  const double eta = p.at("eta");
  d.description = "r' = -2(r-1), theta' = 1, z' = 4z + eta cos(theta) around the unit circle";
  d.nhim = trichotomy_circle(eta, static_cast<int>(p.at("samples")));
  d.problem = bundle_problem(*d.nhim, 0.0, BundleKind::CenterStable);
  d.cut = 2.0;
  d.modes = 1;
  d.mode_rates = {{1, -2.0, 4.0, true}};
  d.center_modes = {0};
  d.retraction_radius = d.nhim->tube_radius;
  d.check_radius = 0.1;
  d.check_time = 0.5;
  d.oracle.kind = ProblemOracle::Kind::PerturbedCircle;
  d.oracle.formula = "r = 1, z = eta (sin(theta) - 4 cos(theta)) / 17";
  d.oracle.circle_height = [eta](double th) { return eta * (std::sin(th) - 4 * std::cos(th)) / 17.0; };
  return d;
}

ProblemDescriptor boussinesq_trunc(const ProblemParams& p) {
  ProblemDescriptor d;
  const int n = static_cast<int>(p.at("modes"));
  const double alpha = p.at("alpha"), r = p.at("radius");
  d.description = "u_tt = u_xx + alpha u_xxxx - (u^2)_xx on the circle, Fourier truncation";
  // state per wave number k: (uc, us, vc, vs)
  const int dim = 4 * n;
  Mat a = Mat::Zero(dim, dim);
  double min_hyp = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= n; ++k) {
    const int i = 4 * (k - 1);
    const double sym = alpha * std::pow(k, 4) - k * k;
    a(i, i + 2) = 1.0;
    a(i + 1, i + 3) = 1.0;
    a(i + 2, i) = sym;
    a(i + 3, i + 1) = sym;
    if (std::abs(sym) < 1e-12)
      throw Error(ErrorKind::ParamOutOfRange, "wave number with alpha k^4 = k^2 is degenerate", k);
    if (sym > 0) {
      const double rate = std::sqrt(sym);
      d.mode_rates.push_back({k, -rate, rate, true});
      min_hyp = std::min(min_hyp, rate);
    } else {
      d.mode_rates.push_back({k, 0.0, 0.0, false});
      d.center_modes.push_back(k);
    }
  }
  if (!std::isfinite(min_hyp))
    throw Error(ErrorKind::ParamOutOfRange, "no hyperbolic wave number: raise modes or alpha", alpha);
  d.cut = 0.5 * min_hyp;  // X = stable ⊕ center, Y = unstable
  d.problem.generator = a;
  d.problem.splitting = split_for(a, d.cut);
  const int grid = 2 * n + 1;
  const Mat f = fourier_basis(grid, n, false);
  d.problem.nonlinearity = [n, r, f](double, const Vec& z, Vec& out) {
    Vec u(2 * n);
    for (int k = 0; k < n; ++k) u.segment(2 * k, 2) = z.segment(4 * k, 2);
    const Vec vals = f * retract(u, r);
    const Vec coeff = f.transpose() * vals.cwiseProduct(vals);
    out.setZero();
    for (int k = 1; k <= n; ++k) out.segment(4 * (k - 1) + 2, 2) = double(k * k) * coeff.segment(2 * (k - 1), 2);
  };
  // |a² − b²| ≤ (|a|∞ + |b|∞)|a − b| with |·|∞ ≤ r on the retracted ball
  finish_eps(d, 2.0 * r * n * n);
  d.retraction_radius = r;
  d.modes = n;
  d.problem.well_posed = false;
  d.check_radius = 0.05;
  return d;
}

}  // namespace

ABCertificate ProblemDescriptor::certificate(double eps1) const {
  return gap_certificate(problem.rate_s(), problem.rate_u(), problem.eps_s, problem.eps_u, std::nullopt, std::nullopt,
                         eps1);
}

GeneratingCorrespondence ProblemDescriptor::correspondence(double t, double omega, const SolverOptions& opts) const {
  if (nhim) return bundle_correspondence(*nhim, t, omega, BundleKind::CenterStable, opts);
  return cocycle_correspondence(problem, t, omega, opts);
}

std::string ProblemDescriptor::to_json() const {
  detail::json j;
  j["id"] = id;
  j["description"] = description;
  j["params"] = params;
  j["cut"] = cut;
  j["modes"] = modes;
  j["dim"] = problem.dim();
  j["dim_x"] = problem.splitting.dim_x();
  j["dim_y"] = problem.splitting.dim_y();
  j["mu_s"] = detail::real_to_json(problem.rate_s());
  j["mu_u"] = detail::real_to_json(problem.rate_u());
  j["eps"] = problem.eps;
  j["eps_s"] = problem.eps_s;
  j["eps_u"] = problem.eps_u;
  j["well_posed"] = problem.well_posed;
  j["retraction_radius"] = retraction_radius;
  detail::json rates = detail::json::array();
  for (const auto& m : mode_rates)
    rates.push_back({{"mode", m.mode}, {"rate_s", m.rate_s}, {"rate_u", m.rate_u}, {"hyperbolic", m.hyperbolic}});
  j["mode_rates"] = rates;
  j["center_modes"] = center_modes;
  j["oracle"] = oracle.formula;
  return j.dump(2);
}

std::vector<std::string> problem_ids() {
  std::vector<std::string> ids;
  for (const auto& [id, r] : catalog()) ids.push_back(id);
  return ids;
}

const std::vector<ParamRange>& param_ranges(const std::string& id) {
  const auto it = catalog().find(id);
  if (it == catalog().end()) throw Error(ErrorKind::UnknownProblem, "unknown problem " + id);
  return it->second;
}

ProblemDescriptor instantiate(const std::string& id, const ProblemParams& params) {
  const auto& ranges = param_ranges(id);
  ProblemParams full;
  for (const auto& r : ranges) full[r.name] = r.value;
  for (const auto& [k, v] : params) {
    const auto it = std::find_if(ranges.begin(), ranges.end(), [&](const ParamRange& r) { return r.name == k; });
    if (it == ranges.end()) throw Error(ErrorKind::ParamOutOfRange, "unknown parameter " + k + " for " + id);
    if (!(v >= it->lo && v <= it->hi))
      throw Error(ErrorKind::ParamOutOfRange,
                  k + " outside [" + fixed_name(it->lo) + ", " + fixed_name(it->hi) + "] for " + id, v);
    if (it->integer && v != std::floor(v)) throw Error(ErrorKind::ParamOutOfRange, k + " must be an integer", v);
    full[k] = v;
  }
  ProblemDescriptor d;
  if (id == "scalar_saddle") d = scalar_saddle(full);
  else if (id == "elliptic_cylinder") d = elliptic_cylinder(full);
  else if (id == "spatial_rd") d = spatial_rd(full);
  else if (id == "nonauto_scalar") d = nonauto_scalar(full);
  else if (id == "nhim_circle") d = nhim_circle(full);
  else d = boussinesq_trunc(full);
  d.id = id;
  d.params = full;
  if (d.problem.id.empty()) d.problem.id = id;
  return d;
}

std::string problems_listing() {
  detail::json a = detail::json::array();
  for (const auto& [id, ranges] : catalog()) {
    detail::json ps = detail::json::array();
    for (const auto& r : ranges)
      ps.push_back({{"name", r.name}, {"default", r.value}, {"min", r.lo}, {"max", r.hi}, {"integer", r.integer},
                    {"help", r.help}});
    a.push_back({{"id", id}, {"params", ps}});
  }
  return a.dump(2);
}

}  // namespace dichotomy
