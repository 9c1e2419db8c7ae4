#include "dichotomy/graph_transform.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>

#include "dichotomy/error.hpp"
#include "dichotomy/io.hpp"
#include "dichotomy/parallel.hpp"
#include "json_util.hpp"

namespace dichotomy {

namespace {

double vnorm(const Vec& v) { return v.size() ? v.norm() : 0.0; }

double wrap(double w, double period) {
  if (period <= 0) return w;
  double r = std::fmod(w, period);
  if (r < 0) r += period;
  return r;
}

}  // namespace

TensorGrid::TensorGrid(int d, int n, double r) : dim(d), nodes_per_axis(n), radius(r) {
  if (d < 1 || d > 3) throw Error(ErrorKind::ParamOutOfRange, "grid dimension must be 1, 2 or 3", d);
  if (n < 3 || n % 2 == 0) throw Error(ErrorKind::ParamOutOfRange, "nodes per axis must be odd and at least 3", n);
  if (!(r > 0)) throw Error(ErrorKind::ParamOutOfRange, "grid radius must be positive", r);
}

int TensorGrid::size() const {
  int s = 1;
  for (int a = 0; a < dim; ++a) s *= nodes_per_axis;
  return s;
}

double TensorGrid::spacing() const { return 2.0 * radius / (nodes_per_axis - 1); }

Vec TensorGrid::node(int index) const {
  Vec x(dim);
  const double h = spacing();
  for (int a = 0; a < dim; ++a) {
    x(a) = -radius + (index % nodes_per_axis) * h;
    index /= nodes_per_axis;
  }
  return x;
}

int TensorGrid::origin_index() const {
  const int mid = nodes_per_axis / 2;
  int idx = 0, stride = 1;
  for (int a = 0; a < dim; ++a, stride *= nodes_per_axis) idx += mid * stride;
  return idx;
}

int TensorGrid::neighbor(int index, int axis, int step) const {
  int stride = 1;
  for (int a = 0; a < axis; ++a) stride *= nodes_per_axis;
  const int coord = (index / stride) % nodes_per_axis + step;
  if (coord < 0 || coord >= nodes_per_axis) return -1;
  return index + step * stride;
}

Vec grid_interpolate(const TensorGrid& grid, const Mat& data, const Vec& x, bool* escaped) {
  const int d = grid.dim, n = grid.nodes_per_axis;
  const double h = grid.spacing();
  int base[3] = {0, 0, 0};
  double frac[3] = {0, 0, 0};
  for (int a = 0; a < d; ++a) {
    double xa = x(a);
    if (std::abs(xa) > grid.radius * (1.0 + 1e-12)) {
      if (escaped) *escaped = true;
      xa = std::clamp(xa, -grid.radius, grid.radius);
    }
    const double s = (xa + grid.radius) / h;
    int i = std::min(static_cast<int>(std::floor(s)), n - 2);
    i = std::max(i, 0);
    base[a] = i;
    frac[a] = std::clamp(s - i, 0.0, 1.0);
  }
  Vec out = Vec::Zero(data.rows());
  for (int corner = 0; corner < (1 << d); ++corner) {
    double w = 1.0;
    int idx = 0, stride = 1;
    for (int a = 0; a < d; ++a, stride *= n) {
      const int bit = (corner >> a) & 1;
      w *= bit ? frac[a] : 1.0 - frac[a];
      idx += (base[a] + bit) * stride;
    }
    if (w != 0.0) out.noalias() += w * data.col(idx);
  }
  return out;
}

GraphFamily GraphFamily::zeros(std::vector<double> samples, double period, const TensorGrid& grid, int dim_y) {
  GraphFamily g;
  g.base_samples = std::move(samples);
  g.period = period;
  g.grid = grid;
  g.dim_y = dim_y;
  g.values.assign(g.base_samples.size(), Mat::Zero(dim_y, grid.size()));
  return g;
}

Vec GraphFamily::eval(std::size_t sample, const Vec& x, bool* escaped) const {
  return grid_interpolate(grid, values.at(sample), x, escaped);
}

Vec GraphFamily::eval_at(double omega, const Vec& x, bool* escaped) const {
  const std::size_t n = base_samples.size();
  if (n == 1) return eval(0, x, escaped);
  double pos;
  if (period > 0) {
    pos = wrap(omega, period) / period * n;
  } else {
    // nonperiodic: piecewise linear in the sample positions, clamped
    if (omega <= base_samples.front()) return eval(0, x, escaped);
    if (omega >= base_samples.back()) return eval(n - 1, x, escaped);
    const auto it = std::upper_bound(base_samples.begin(), base_samples.end(), omega);
    const std::size_t hi = it - base_samples.begin();
    pos = (hi - 1) + (omega - base_samples[hi - 1]) / (base_samples[hi] - base_samples[hi - 1]);
  }
  std::size_t i = static_cast<std::size_t>(std::floor(pos));
  double w = pos - i;
  if (i >= n) i = period > 0 ? i % n : n - 1;
  if (w < 1e-12) return eval(i, x, escaped);
  const std::size_t j = period > 0 ? (i + 1) % n : std::min(i + 1, n - 1);
  if (w > 1.0 - 1e-12) return eval(j, x, escaped);
  return (1.0 - w) * eval(i, x, escaped) + w * eval(j, x, escaped);
}

double GraphFamily::node_lipschitz() const {
  const double h = grid.spacing();
  double lip = 0.0;
  for (const auto& v : values)
    for (int i = 0; i < grid.size(); ++i)
      for (int a = 0; a < grid.dim; ++a) {
        const int j = grid.neighbor(i, a, 1);
        if (j >= 0) lip = std::max(lip, (v.col(j) - v.col(i)).norm() / h);
      }
  return lip;
}

double GraphFamily::sup_distance(const GraphFamily& other) const {
  if (other.values.size() != values.size()) throw Error(ErrorKind::DimensionMismatch, "graph families differ in samples");
  double d = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].rows() == 0) continue;
    d = std::max(d, (values[i] - other.values[i]).colwise().norm().maxCoeff());
  }
  return d;
}

std::string GraphFamily::to_json_meta() const {
  using detail::json;
  json j;
  j["samples"] = base_samples.size();
  j["period"] = period;
  j["grid"] = {{"dim", grid.dim}, {"nodes_per_axis", grid.nodes_per_axis}, {"radius", grid.radius}};
  j["dim_y"] = dim_y;
  j["lip_estimate"] = lip_estimate;
  j["section_offset"] = section_offset;
  j["offset_bound"] = offset_bound;
  j["invariance_residual"] = invariance_residual;
  json inv = json::array();
  for (const auto& [t, r] : invariance_by_time) inv.push_back({{"t", t}, {"residual", r}});
  j["invariance_by_time"] = inv;
  json eta = json::array();
  for (const auto& e : eta_profile) eta.push_back({{"t", e.t}, {"omega", e.omega}, {"eta", e.eta}});
  j["eta_profile"] = eta;
  j["t0"] = t0;
  j["theta"] = theta;
  j["offset_constant"] = offset_constant;
  j["iterations"] = iterations;
  j["increments"] = increments;
  j["x_map_lip"] = x_map_lip;
  j["domain_escapes"] = domain_escapes;
  return j.dump(2);
}

std::string GraphFamily::to_csv() const {
  std::vector<std::string> header{"sample", "omega"};
  for (int a = 0; a < grid.dim; ++a) header.push_back("x" + std::to_string(a));
  for (int k = 0; k < dim_y; ++k) header.push_back("y" + std::to_string(k));
  std::vector<std::vector<double>> rows;
  for (std::size_t s = 0; s < values.size(); ++s)
    for (int i = 0; i < grid.size(); ++i) {
      std::vector<double> row{static_cast<double>(s), base_samples[s]};
      const Vec x = grid.node(i);
      for (int a = 0; a < grid.dim; ++a) row.push_back(x(a));
      for (int k = 0; k < dim_y; ++k) row.push_back(values[s](k, i));
      rows.push_back(std::move(row));
    }
  return io::csv_table(header, rows);
}

double GraphCocycle::flow(double omega, double t) const {
  if (base_flow) return base_flow(omega, t);
  if (period > 0) return wrap(omega + t, period);
  return samples.size() == 1 ? omega : omega + t;
}

Vec GraphCocycle::embed_x(double omega, const Vec& x) const { return embed ? embed(omega, x) : x; }

std::pair<double, Vec> GraphCocycle::transport_x(double omega_img, const Vec& x_out) const {
  return transport ? transport(omega_img, x_out) : std::pair<double, Vec>{omega_img, x_out};
}

GraphCocycle dual_cocycle(const GraphCocycle& c) {
  GraphCocycle d;
  d.dim_x = c.dim_y;
  d.dim_y = c.dim_x;
  d.samples = c.samples;
  d.period = c.period;
  d.base_step = c.base_step;
  auto at = c.at;
  auto src = c;
  d.base_flow = [src](double omega, double t) { return src.flow(omega, -t); };
  d.at = [at, src](double t, double omega) { return dual(at(t, src.flow(omega, -t))); };
  return d;
}

GraphCocycle autonomous_cocycle(int dim_x, int dim_y, std::function<GeneratingCorrespondence(double t)> h) {
  GraphCocycle c;
  c.dim_x = dim_x;
  c.dim_y = dim_y;
  c.samples = {0.0};
  c.at = [h](double t, double) { return h(t); };
  c.base_flow = [](double omega, double) { return omega; };
  return c;
}

PullbackResult pullback_graph_step(const GeneratingCorrespondence& h, const ImageGraph& f2, double f2_lip,
                                   const std::vector<Vec>& inputs, const ABConstants& c, double tol, int max_iter,
                                   const Mat* warm_start, std::size_t threads) {
  const double beta_hat = std::min(f2_lip, c.beta);
  if (c.alpha * beta_hat >= 1.0)
    throw Error(ErrorKind::AngleConditionViolated, "alpha * beta_hat must be below 1", c.alpha * beta_hat);
  const auto& d = h.dims();
  const int n = static_cast<int>(inputs.size());
  PullbackResult r;
  r.f1.resize(d.y1, n);
  r.x1_map.resize(d.x2, n);
  std::vector<int> iters(n, 0);
  std::vector<char> escaped(n, 0);
  parallel_for(
      static_cast<std::size_t>(n),
      [&](std::size_t k) {
        const Vec& x = inputs[k];
        Vec u = (warm_start && warm_start->cols() == n) ? Vec(warm_start->col(k)) : Vec(Vec::Zero(d.x2));
        for (int it = 1;; ++it) {
          bool esc = false;
          const Vec y2 = f2(u, &esc);
          auto [fu, gu] = h.eval(x, y2);
          const double du = (fu - u).size() ? (fu - u).norm() : 0.0;
          u = std::move(fu);
          if (du <= tol) {
            r.f1.col(k) = gu;
            iters[k] = it;
            escaped[k] = esc;
            break;
          }
          if (it >= max_iter)
            throw Error(ErrorKind::MaxIterExceeded, "inner graph-transform fixed point did not converge", du);
        }
        r.x1_map.col(k) = u;
      },
      threads);
  r.max_inner_iterations = *std::max_element(iters.begin(), iters.end());
  r.domain_escapes = std::count(escaped.begin(), escaped.end(), 1);
  return r;
}

PullbackResult pullback_graph_step(const GeneratingCorrespondence& h, const GraphFamily& f2, const ABConstants& c,
                                   double tol) {
  std::vector<Vec> inputs;
  for (int i = 0; i < f2.grid.size(); ++i) inputs.push_back(f2.grid.node(i));
  ImageGraph g = [&f2](const Vec& x, bool* esc) { return f2.eval(0, x, esc); };
  auto r = pullback_graph_step(h, g, f2.node_lipschitz(), inputs, c, tol);
  if (r.domain_escapes)
    throw Error(ErrorKind::DomainEscape, "x1(x) left the grid of f2", static_cast<double>(r.domain_escapes));
  return r;
}

void SectionSpec::validate(const std::vector<double>& samples,
                           const std::function<double(double, double)>& base_flow) const {
  for (double w : samples) {
    if (eps_fn && eps1_fn) {
      const double e = eps_fn(w), e1 = eps1_fn(w);
      if (e < 0 || e > e1) throw Error(ErrorKind::HypothesisFailure, "section needs 0 <= eps <= eps1", e - e1);
    }
    if (!eta_fn || !eps_fn) continue;
    for (double t : {0.5, 1.0, 2.0})
      for (double r : {0.5, 1.0, 2.0}) {
        const double lhs = eta_fn(t, base_flow(w, r));
        const double rhs = std::pow(eps_fn(w), r) * eta_fn(t, w);
        if (lhs > 1.05 * rhs + 1e-300)
          throw Error(ErrorKind::HypothesisFailure, "eta(t, r omega) exceeds eps^r eta(t, omega)", lhs - rhs);
      }
  }
}

double graph_theta(const std::vector<ABCertificate>& constants, const SectionSpec& section,
                   const std::vector<double>& samples, double t0) {
  double theta = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& c = constants.size() == 1 ? constants[0] : constants.at(i);
    double num = c.c * c.c * std::pow(c.lambda_u * c.lambda_s, t0);
    if (section.mode != SectionMode::InvariantZero) {
      const double e1 = section.eps1_fn ? section.eps1_fn(samples[i]) : 1.0;
      num += c.c * std::pow(c.lambda_u * e1, t0);
    }
    theta = std::max(theta, num / (1.0 - c.alpha * c.beta));
  }
  return theta;
}

namespace {

struct SweepContext {
  const GraphCocycle& cocycle;
  const std::vector<ABCertificate>& constants;
  std::vector<std::vector<Vec>> inputs;
  double inner_tol;
  int inner_max_iter;
  std::size_t threads;

  const ABCertificate& cert(std::size_t i) const { return constants.size() == 1 ? constants[0] : constants.at(i); }
};

struct SweepOutput {
  std::vector<Mat> values;
  std::vector<Mat> x_maps;
  std::size_t escapes = 0;
};

SweepOutput sweep(const SweepContext& ctx, const GraphFamily& f, double t, const std::vector<Mat>* warm) {
  SweepOutput out;
  const auto& cc = ctx.cocycle;
  const double lip = f.node_lipschitz();
  for (std::size_t i = 0; i < cc.samples.size(); ++i) {
    const double w = cc.samples[i];
    const auto h = cc.at(t, w);
    const double img = cc.flow(w, t);
    ImageGraph f2 = [&](const Vec& x_out, bool* esc) {
      auto [wi, xg] = cc.transport_x(img, x_out);
      return f.eval_at(wi, xg, esc);
    };
    auto r = pullback_graph_step(h, f2, lip, ctx.inputs[i], ctx.cert(i).constants_at(t), ctx.inner_tol,
                                 ctx.inner_max_iter, warm ? &(*warm)[i] : nullptr, ctx.threads);
    out.values.push_back(std::move(r.f1));
    out.x_maps.push_back(std::move(r.x1_map));
    out.escapes += r.domain_escapes;
  }
  return out;
}

double sup_diff(const std::vector<Mat>& a, const std::vector<Mat>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].rows() && a[i].cols()) d = std::max(d, (a[i] - b[i]).colwise().norm().maxCoeff());
  return d;
}

double x_map_lipschitz(const TensorGrid& grid, const std::vector<Mat>& maps) {
  const double h = grid.spacing();
  double lip = 0.0;
  for (const auto& m : maps)
    for (int i = 0; i < grid.size(); ++i)
      for (int a = 0; a < grid.dim; ++a) {
        const int j = grid.neighbor(i, a, 1);
        if (j >= 0 && m.rows()) lip = std::max(lip, (m.col(j) - m.col(i)).norm() / h);
      }
  return lip;
}

double measured_eta(const GraphCocycle& cc, double t, double w) {
  const auto h = cc.at(t, w);
  const auto& d = h.dims();
  const Vec x0 = cc.embed_x(w, Vec::Zero(cc.dim_x));
  auto [f, g] = h.eval(x0, Vec::Zero(d.y2));
  // the section's image sits at the embedded origin of the image fibre
  const Vec ref = cc.embed_x(cc.flow(w, t), Vec::Zero(cc.dim_x));
  return std::max(vnorm(f - ref), vnorm(g));
}

}  // namespace

GraphFamily invariant_graph(const GraphCocycle& cc, const SectionSpec& section,
                            const std::vector<ABCertificate>& constants, const GraphOptions& opts) {
  if (!cc.at) throw Error(ErrorKind::ParamOutOfRange, "cocycle has no correspondence");
  if (cc.samples.empty()) throw Error(ErrorKind::EmptyTable, "cocycle has no base samples");
  if (constants.empty() || (constants.size() != 1 && constants.size() != cc.samples.size()))
    throw Error(ErrorKind::DimensionMismatch, "one certificate or one per base sample required");

  double sup_ab = 0.0, sup_lam = 0.0, sup_le = 0.0, sup_beta = 0.0;
  for (std::size_t i = 0; i < cc.samples.size(); ++i) {
    const auto& c = constants.size() == 1 ? constants[0] : constants[i];
    sup_ab = std::max(sup_ab, c.alpha * c.beta);
    sup_lam = std::max(sup_lam, c.lambda_u * c.lambda_s);
    sup_beta = std::max(sup_beta, c.beta);
    if (section.mode != SectionMode::InvariantZero)
      sup_le = std::max(sup_le, c.lambda_u * (section.eps1_fn ? section.eps1_fn(cc.samples[i]) : 1.0));
  }
  if (sup_ab >= 1.0) throw Error(ErrorKind::AngleConditionViolated, "sup alpha * beta must be below 1", sup_ab);
  if (section.mode != SectionMode::YBounded && sup_lam >= 1.0)
    throw Error(ErrorKind::SpectralConditionViolated, "sup lambda_u * lambda_s must be below 1", sup_lam);
  if (section.mode != SectionMode::InvariantZero && sup_le >= 1.0)
    throw Error(ErrorKind::SpectralConditionViolated, "sup lambda_u * eps1 must be below 1", sup_le);
  section.validate(cc.samples, [&cc](double w, double t) { return cc.flow(w, t); });

  double t0 = opts.t0, theta = 0.0;
  if (t0 > 0) {
    theta = graph_theta(constants, section, cc.samples, t0);
    if (theta >= 1.0) throw Error(ErrorKind::ThetaNotContractive, "theta(t0) is not below 1", theta);
  } else {
    for (int k = 1; k <= opts.max_t0_steps; ++k) {
      theta = graph_theta(constants, section, cc.samples, k * cc.base_step);
      if (theta < opts.theta_target) {
        t0 = k * cc.base_step;
        break;
      }
    }
    if (!(t0 > 0)) throw Error(ErrorKind::ThetaNotContractive, "no t0 up to the cap gives theta below target", theta);
  }

  const TensorGrid grid(cc.dim_x, opts.nodes_per_axis, opts.radius);
  SweepContext ctx{cc, constants, {}, opts.inner_tol > 0 ? opts.inner_tol : opts.tol / 10, opts.inner_max_iter,
                   opts.threads};
  for (double w : cc.samples) {
    std::vector<Vec> in;
    in.reserve(grid.size());
    for (int i = 0; i < grid.size(); ++i) in.push_back(cc.embed_x(w, grid.node(i)));
    ctx.inputs.push_back(std::move(in));
  }

  GraphFamily f = GraphFamily::zeros(cc.samples, cc.period, grid, cc.dim_y);
  if (opts.initial) {
    if (opts.initial->values.size() != f.values.size() || opts.initial->grid.size() != grid.size())
      throw Error(ErrorKind::DimensionMismatch, "initial graph does not match the grid");
    f.values = opts.initial->values;
  }
  f.t0 = t0;
  f.theta = theta;
  f.offset_constant = (theta * sup_beta + 1.0) / (1.0 - theta);

  std::vector<Mat> warm;
  for (int it = 1;; ++it) {
    auto s = sweep(ctx, f, t0, warm.empty() ? nullptr : &warm);
    const double inc = sup_diff(s.values, f.values);
    f.values = std::move(s.values);
    warm = std::move(s.x_maps);
    f.increments.push_back(inc);
    f.iterations = it;
    f.domain_escapes = s.escapes;
    if (inc <= opts.tol) break;
    if (it >= opts.max_iter) throw Error(ErrorKind::MaxIterExceeded, "graph transform did not converge", inc);
  }

  // residual sweeps reuse the converged graph as f2
  {
    auto s = sweep(ctx, f, t0, &warm);
    f.invariance_residual = sup_diff(s.values, f.values);
    f.invariance_by_time[t0] = f.invariance_residual;
    f.x_map_lip = x_map_lipschitz(grid, s.x_maps);
    f.domain_escapes = s.escapes;
  }
  if (f.domain_escapes > 0)
    throw Error(ErrorKind::DomainEscape, "converged graph needs values outside its grid",
                static_cast<double>(f.domain_escapes));
  if (opts.extra_residuals)
    for (double t : {0.5 * t0, 2.0 * t0}) f.invariance_by_time[t] = sup_diff(sweep(ctx, f, t, nullptr).values, f.values);

  f.lip_estimate = f.node_lipschitz();
  const int o = grid.origin_index();
  for (std::size_t i = 0; i < cc.samples.size(); ++i) {
    const double w = cc.samples[i];
    f.section_offset.push_back(vnorm(f.values[i].col(o)));
    double inf_eta = std::numeric_limits<double>::infinity();
    for (double t : {t0, 2.0 * t0}) {
      const double eta = section.eta_fn ? section.eta_fn(t, w) : measured_eta(cc, t, w);
      f.eta_profile.push_back({t, w, eta});
      inf_eta = std::min(inf_eta, eta);
    }
    f.offset_bound.push_back(f.offset_constant * inf_eta);
  }
  return f;
}

GraphFamily local_stable_graph(const GraphCocycle& cc, double sigma0, const std::vector<ABCertificate>& constants,
                               GraphOptions opts, const SectionSpec& section) {
  if (!(sigma0 > 0)) throw Error(ErrorKind::ParamOutOfRange, "sigma0 must be positive", sigma0);
  for (const auto& c : constants)
    if (!(c.lambda_s < 1.0)) throw Error(ErrorKind::SpectralConditionViolated, "local version needs lambda_s < 1", c.lambda_s);
  opts.radius = sigma0;
  GraphFamily f;
  try {
    f = invariant_graph(cc, section, constants, opts);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::DomainEscape)
      throw Error(ErrorKind::SigmaTooLarge, "induced map leaves the sigma0-ball", e.value());
    throw;
  }
  double sup_ab = 0.0;
  for (const auto& c : constants) {
    const auto k = c.constants_at(f.t0);
    sup_ab = std::max(sup_ab, k.alpha * k.beta_prime);
  }
  if (sup_ab >= 0.5)
    throw Error(ErrorKind::AngleConditionViolated, "local version needs sup alpha * beta' < 1/2", sup_ab);
  return f;
}

InducedStep induced_map(const GraphCocycle& cc, const GraphFamily& f, double omega, const Vec& x, double t,
                        const ABConstants& constants, double tol) {
  const auto h = cc.at(t, omega);
  const double img = cc.flow(omega, t);
  ImageGraph f2 = [&](const Vec& x_out, bool* esc) {
    auto [wi, xg] = cc.transport_x(img, x_out);
    return f.eval_at(wi, xg, esc);
  };
  auto r = pullback_graph_step(h, f2, f.node_lipschitz(), {cc.embed_x(omega, x)}, constants, tol, 500, nullptr, 1);
  InducedStep s;
  auto [w, xg] = cc.transport_x(img, r.x1_map.col(0));
  s.omega = w;
  s.x = xg;
  s.y = f.eval_at(w, xg);
  s.y_src = r.f1.col(0);
  return s;
}

double BaseOrbit::step() const {
  if (times.size() < 2) throw Error(ErrorKind::OrbitInconsistent, "orbit needs at least two samples");
  return (times.back() - times.front()) / (times.size() - 1);
}

Vec FiberResult::fiber_value(std::size_t i, const Vec& x) const {
  return grid_interpolate(grid, graphs.at(i), x);
}

std::vector<double> FiberResult::separations(const Vec& x0) const {
  std::vector<double> s;
  Vec x = x0;
  for (std::size_t i = 0; i < horizon_samples; ++i) {
    s.push_back(max_norm(x, fiber_value(i, x)));
    if (i + 1 < horizon_samples) x = grid_interpolate(grid, x_maps.at(i), x);
  }
  return s;
}

FiberResult strong_stable_fiber(const GraphCocycle& cc, const BaseOrbit& orbit, double sigma0,
                                const ABCertificate& constants, double tol, int nodes_per_axis, double horizon,
                                double padding) {
  if (orbit.times.size() != orbit.states.size())
    throw Error(ErrorKind::OrbitInconsistent, "orbit times and states differ in length");
  const double dt = orbit.step();
  for (std::size_t i = 1; i < orbit.times.size(); ++i)
    if (std::abs(orbit.times[i] - orbit.times[i - 1] - dt) > 1e-9 * std::max(1.0, dt))
      throw Error(ErrorKind::OrbitInconsistent, "orbit samples must be uniform in time");
  const double needed = orbit.times.front() + horizon + padding;
  if (orbit.times.back() < needed - 1e-9)
    throw Error(ErrorKind::ParamOutOfRange, "orbit shorter than horizon plus padding", orbit.times.back());
  if (!(constants.lambda_s < 1.0))
    throw Error(ErrorKind::SpectralConditionViolated, "fibres need lambda_s < 1", constants.lambda_s);
  const ABConstants k = constants.constants_at(dt);
  if (k.alpha * k.beta_prime >= 0.5)
    throw Error(ErrorKind::AngleConditionViolated, "local version needs alpha * beta' < 1/2", k.alpha * k.beta_prime);

  std::size_t last = 0;
  while (last + 1 < orbit.times.size() && orbit.times[last + 1] <= needed + 1e-9) ++last;
  FiberResult out;
  out.grid = TensorGrid(cc.dim_x, nodes_per_axis, sigma0);
  out.dim_y = cc.dim_y;
  out.times.assign(orbit.times.begin(), orbit.times.begin() + last + 1);
  out.graphs.assign(last + 1, Mat::Zero(cc.dim_y, out.grid.size()));
  out.x_maps.assign(last, Mat());

  // the deviation cocycle must fix the zero deviation along the orbit
  const double consistency = std::max(1e3 * tol, 1e-8);
  for (std::size_t i = 0; i < last; ++i) {
    const auto h = cc.at(dt, orbit.times[i]);
    auto [f0, g0] = h.eval(Vec::Zero(h.dims().x1), Vec::Zero(h.dims().y2));
    const double r = std::max(vnorm(f0), vnorm(g0));
    if (r > consistency) throw Error(ErrorKind::OrbitInconsistent, "zero deviation is not invariant along the orbit", r);
  }

  std::vector<Vec> inputs;
  for (int i = 0; i < out.grid.size(); ++i) inputs.push_back(out.grid.node(i));
  double lip = 0.0;
  for (std::size_t i = last; i-- > 0;) {
    const auto h = cc.at(dt, orbit.times[i]);
    const Mat& next = out.graphs[i + 1];
    ImageGraph f2 = [&](const Vec& x, bool* esc) { return grid_interpolate(out.grid, next, x, esc); };
    auto r = pullback_graph_step(h, f2, lip, inputs, k, tol * 0.1, 500, nullptr);
    out.graphs[i] = std::move(r.f1);
    out.x_maps[i] = std::move(r.x1_map);
    GraphFamily probe = GraphFamily::zeros({0.0}, 0.0, out.grid, cc.dim_y);
    probe.values[0] = out.graphs[i];
    lip = probe.node_lipschitz();
  }
  std::size_t hs = 0;
  while (hs < out.times.size() && out.times[hs] <= orbit.times.front() + horizon + 1e-9) ++hs;
  out.horizon_samples = hs;
  return out;
}

namespace {

Vec full_field(const EvolutionProblem& p, double t, const Vec& z) {
  const double a = p.base.driver ? p.base.driver(t) : 1.0;
  Vec out = a * (p.generator * z);
  if (p.nonlinearity) {
    Vec f = Vec::Zero(z.size());
    p.nonlinearity(t, z, f);
    out += f;
  }
  return out;
}

Vec rk4_step(const EvolutionProblem& p, double t, const Vec& z, double h) {
  const Vec k1 = full_field(p, t, z), k2 = full_field(p, t + 0.5 * h, z + 0.5 * h * k1),
            k3 = full_field(p, t + 0.5 * h, z + 0.5 * h * k2), k4 = full_field(p, t + h, z + h * k3);
  return z + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
}

}  // namespace

BaseOrbit forward_orbit(const EvolutionProblem& p, const Vec& z0, double t_start, double dt, int samples,
                        const SolverOptions& opts) {
  if (!p.well_posed) throw Error(ErrorKind::ParamOutOfRange, "forward orbits need a well-posed problem");
  if (!(dt > 0) || samples < 1) throw Error(ErrorKind::ParamOutOfRange, "orbit needs dt > 0 and samples >= 1");
  if (z0.size() != p.dim()) throw Error(ErrorKind::DimensionMismatch, "z0 has the wrong dimension");
  BaseOrbit o;
  Vec z = z0;
  const int n = opts.steps_for(dt);
  const double h = dt / n;
  for (int k = 0; k < samples; ++k) {
    const double t = t_start + k * dt;
    o.times.push_back(t);
    o.states.push_back(z);
    if (k + 1 == samples) break;
    for (int j = 0; j < n; ++j) z = rk4_step(p, t + j * h, z, h);
    if (!z.allFinite()) throw Error(ErrorKind::OrbitInconsistent, "orbit diverged", t + dt);
  }
  return o;
}

GraphCocycle orbit_deviation_cocycle(const EvolutionProblem& p, const BaseOrbit& orbit, const SolverOptions& opts) {
  if (!p.well_posed) throw Error(ErrorKind::ParamOutOfRange, "orbit deviations need a well-posed problem");
  GraphCocycle c;
  c.dim_x = p.splitting.dim_x();
  c.dim_y = p.splitting.dim_y();
  c.samples = {orbit.times.empty() ? 0.0 : orbit.times.front()};
  c.base_step = orbit.step();
  c.base_flow = [](double w, double t) { return w + t; };
  const double t_start = c.samples[0];
  const double dt = c.base_step;
  c.at = [p, orbit, opts, t_start, dt](double t, double omega) {
    const auto k = static_cast<std::size_t>(std::llround((omega - t_start) / dt));
    if (k >= orbit.states.size()) throw Error(ErrorKind::OrbitInconsistent, "base point beyond the sampled orbit", omega);
    const int n = opts.steps_for(t);
    const double h = t / n;
    std::vector<Vec> table{orbit.states[k]};
    for (int j = 0; j < n; ++j) table.push_back(rk4_step(p, omega + j * h, table.back(), h));
    EvolutionProblem q = p;
    q.id = p.id + "/deviation";
    const Nonlinearity f = p.nonlinearity;
    if (f) {
      q.nonlinearity = [f, table, h, omega](double tau, const Vec& d, Vec& out) {
        const auto j = std::min<std::size_t>(table.size() - 1,
                                             static_cast<std::size_t>(std::max(0.0, std::round((tau - omega) / h))));
        Vec f0 = Vec::Zero(d.size());
        f(tau, table[j], f0);
        f(tau, table[j] + d, out);
        out -= f0;
      };
    }
    return cocycle_correspondence(q, t, omega, opts);
  };
  return c;
}

double fit_decay_rate(const std::vector<double>& times, const std::vector<double>& seps, double floor) {
  double st = 0, sl = 0, stt = 0, stl = 0;
  int n = 0;
  for (std::size_t i = 0; i < std::min(times.size(), seps.size()); ++i) {
    if (!(seps[i] > floor)) continue;
    const double l = std::log(seps[i]);
    st += times[i];
    sl += l;
    stt += times[i] * times[i];
    stl += times[i] * l;
    ++n;
  }
  if (n < 2) throw Error(ErrorKind::ParamOutOfRange, "rate fit needs two separations above the floor", n);
  const double slope = (n * stl - st * sl) / (n * stt - st * st);
  return std::exp(slope);
}

SmoothnessReport smoothness_probe(const GraphFamily& g, ProbeOrder order) {
  if (g.grid.nodes_per_axis < 5) throw Error(ErrorKind::GridTooCoarse, "need at least 5 nodes per axis");
  SmoothnessReport rep;
  rep.order = order;
  const auto& grid = g.grid;
  const double h = grid.spacing();
  auto central = [&](const Mat& v, int i, int a) -> std::optional<Vec> {
    const int p = grid.neighbor(i, a, 1), m = grid.neighbor(i, a, -1);
    if (p < 0 || m < 0) return std::nullopt;
    return Vec((v.col(p) - v.col(m)) / (2.0 * h));
  };
  if (order == ProbeOrder::First) {
    for (const auto& v : g.values) {
      std::vector<double> der;
      for (int i = 0; i < grid.size(); ++i)
        for (int a = 0; a < grid.dim; ++a) {
          const int p = grid.neighbor(i, a, 1), m = grid.neighbor(i, a, -1);
          if (p < 0 || m < 0) continue;
          const Vec dp = (v.col(p) - v.col(i)) / h, dm = (v.col(i) - v.col(m)) / h;
          rep.discrepancy = std::max(rep.discrepancy, (dp - dm).size() ? (dp - dm).norm() : 0.0);
          if (a == 0 && v.rows()) der.push_back(0.5 * (dp(0) + dm(0)));
        }
      rep.derivative.push_back(std::move(der));
    }
    return rep;
  }
  const std::size_t n = g.values.size();
  if (n < 16) throw Error(ErrorKind::GridTooCoarse, "Holder probe needs at least 16 base samples", n);
  std::vector<Vec> d;
  for (const auto& v : g.values) {
    std::vector<double> flat;
    for (int i = 0; i < grid.size(); ++i)
      for (int a = 0; a < grid.dim; ++a)
        if (auto c = central(v, i, a)) flat.insert(flat.end(), c->data(), c->data() + c->size());
    d.push_back(Eigen::Map<Vec>(flat.data(), flat.size()));
  }
  const double dw = g.period > 0 ? g.period / n : (g.base_samples.back() - g.base_samples.front()) / (n - 1);
  std::vector<double> lx, ly;
  for (std::size_t lag = 1; lag <= n / 8; ++lag) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t j = i + lag;
      if (j >= n) {
        if (g.period <= 0) break;
        j -= n;
      }
      s = std::max(s, (d[j] - d[i]).cwiseAbs().maxCoeff());
    }
    rep.lag_sup.push_back(s);
    if (s > 1e-300) {
      lx.push_back(std::log(lag * dw));
      ly.push_back(std::log(s));
    }
  }
  if (lx.size() < 2) {
    rep.degenerate = true;
    rep.holder_exponent = 1.0;
    return rep;
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) mx += lx[i], my += ly[i];
  mx /= lx.size();
  my /= ly.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) sxy += (lx[i] - mx) * (ly[i] - my), sxx += (lx[i] - mx) * (lx[i] - mx);
  rep.holder_exponent = sxy / sxx;
  return rep;
}

std::string SmoothnessReport::to_json() const {
  detail::json j;
  j["order"] = order == ProbeOrder::First ? "first" : "holder";
  if (order == ProbeOrder::First) {
    j["discrepancy"] = discrepancy;
  } else {
    j["holder_exponent"] = holder_exponent;
    j["lag_sup"] = lag_sup;
    j["degenerate"] = degenerate;
  }
  return j.dump(2);
}

}  // namespace dichotomy
