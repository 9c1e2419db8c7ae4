#include "dichotomy/nhim.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "dichotomy/error.hpp"
#include "dichotomy/io.hpp"
#include "json_util.hpp"

namespace dichotomy {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_angle(double a) {
  double r = std::fmod(a, kTwoPi);
  if (r < 0) r += kTwoPi;
  return r;
}

double wrap_pi(double a) { return wrap_angle(a + std::numbers::pi) - std::numbers::pi; }

Vec circle_point(double r, double th) { return Vec((Eigen::Vector3d() << r * std::cos(th), r * std::sin(th), 0).finished()); }

Mat radial(double th) { return (Mat(3, 1) << std::cos(th), std::sin(th), 0).finished(); }
Mat tangent(double th) { return (Mat(3, 1) << -std::sin(th), std::cos(th), 0).finished(); }
Mat axis_z(double) { return (Mat(3, 1) << 0, 0, 1).finished(); }

Mat projector(const Mat& frame) {
  const int n = static_cast<int>(frame.rows());
  if (frame.cols() == 0) return Mat::Zero(n, n);
  return frame * frame.transpose();
}

Vec retract(const Vec& w, double radius) {
  const double n = w.size() ? w.norm() : 0.0;
  return n > radius ? Vec(w * (radius / n)) : w;
}

/// Index layout of z̃ for the two bundle splittings.
struct Layout {
  BundleKind kind;
  int ds, du;
  int theta() const { return kind == BundleKind::CenterStable ? 0 : ds; }
  int s0() const { return kind == BundleKind::CenterStable ? 1 : 0; }
  int u0() const { return 1 + ds; }
  int dim() const { return 1 + ds + du; }
  int dim_x() const { return kind == BundleKind::CenterStable ? 1 + ds : ds; }
};

Mat block_generator(const NhimModel& m, const Layout& l) {
  Mat a = Mat::Zero(l.dim(), l.dim());
  if (m.ds) a.block(l.s0(), l.s0(), m.ds, m.ds) = m.js;
  if (m.du) a.block(l.u0(), l.u0(), m.du, m.du) = m.ju;
  return a;
}

}  // namespace

double ImmersedBase::chi(double eps) const {
  if (kind == Kind::Point || chi_profile.empty()) return 0.0;
  for (const auto& [e, c] : chi_profile)
    if (e >= eps - 1e-15) return c;
  return secant_deviation(eps);
}

double ImmersedBase::secant_deviation(double eps) const {
  if (kind == Kind::Point) return 0.0;
  double worst = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t j = 0; j < samples.size(); ++j) {
      if (i == j) continue;
      const Vec d = samples[j] - samples[i];
      const double nd = d.norm();
      if (nd > eps || nd == 0.0) continue;
      worst = std::max(worst, (d - proj_c[i] * d).norm() / nd);
    }
  return worst;
}

ImmersedBase make_circle_base(int n, double radius, const CircleFrames& frames, double eps1) {
  if (n < 8) throw Error(ErrorKind::ParamOutOfRange, "circle bases need at least 8 samples", n);
  ImmersedBase b;
  b.kind = ImmersedBase::Kind::Circle;
  b.ambient_dim = 3;
  b.circle_radius = radius;
  b.eps1 = eps1;
  for (int i = 0; i < n; ++i) {
    const double th = kTwoPi * i / n;
    b.params.push_back(th);
    b.samples.push_back(circle_point(radius, th));
    b.frame_s.push_back(frames.s(th));
    b.frame_c.push_back(frames.c(th));
    b.frame_u.push_back(frames.u(th));
    b.proj_s.push_back(projector(b.frame_s.back()));
    b.proj_c.push_back(projector(b.frame_c.back()));
    b.proj_u.push_back(projector(b.frame_u.back()));
  }
  for (double e : {0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.5})
    if (std::abs(e - eps1) > 1e-15) b.chi_profile.emplace_back(e, b.secant_deviation(e));
  b.chi_profile.emplace_back(eps1, b.secant_deviation(eps1));
  std::sort(b.chi_profile.begin(), b.chi_profile.end());
  const double phi_max = 2.0 * std::asin(std::min(1.0, eps1 / (2.0 * radius)));
  b.delta0 = radius * std::sin(phi_max);
  // orthogonal rank-one projections rotate with the angle: L = L0 = 1
  b.lip_L = 1.0;
  b.lip_L0 = 1.0;
  verify_base(b);
  return b;
}

ImmersedBase make_point_base(const Vec& point, const Mat& frame_s, const Mat& frame_u) {
  ImmersedBase b;
  b.kind = ImmersedBase::Kind::Point;
  b.ambient_dim = static_cast<int>(point.size());
  b.params = {0.0};
  b.samples = {point};
  b.frame_s = {frame_s};
  b.frame_u = {frame_u};
  b.frame_c = {Mat(point.size(), 0)};
  b.proj_s = {projector(frame_s)};
  b.proj_u = {projector(frame_u)};
  b.proj_c = {projector(b.frame_c[0])};
  b.chi_profile = {{b.eps1, 0.0}};
  b.lip_L = 0.0;
  b.lip_L0 = 1.0;
  verify_base(b);
  return b;
}

void verify_base(const ImmersedBase& b) {
  const int n = b.ambient_dim;
  const Mat id = Mat::Identity(n, n);
  for (std::size_t i = 0; i < b.samples.size(); ++i) {
    const Mat* p[3] = {&b.proj_s[i], &b.proj_c[i], &b.proj_u[i]};
    if ((*p[0] + *p[1] + *p[2] - id).norm() > 1e-9)
      throw Error(ErrorKind::InvariantFailure, "projections do not sum to the identity");
    for (int a = 0; a < 3; ++a) {
      if ((*p[a] * *p[a] - *p[a]).norm() > 1e-9) throw Error(ErrorKind::InvariantFailure, "projection not idempotent");
      if (norm2(*p[a]) > b.lip_L0 * (1.0 + 1e-9))
        throw Error(ErrorKind::InvariantFailure, "H2: projection norm exceeds L0", norm2(*p[a]));
      for (int c = 0; c < 3; ++c)
        if (a != c && (*p[a] * *p[c]).norm() > 1e-9)
          throw Error(ErrorKind::InvariantFailure, "projections do not annihilate each other");
    }
  }
  if (b.kind == ImmersedBase::Kind::Point) return;
  const std::size_t m = b.samples.size();
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = (i + 1) % m;
    const double d = (b.samples[j] - b.samples[i]).norm();
    for (const auto* pr : {&b.proj_s, &b.proj_c, &b.proj_u}) {
      const double dp = norm2((*pr)[j] - (*pr)[i]);
      if (dp > b.lip_L * d * (1.0 + 1e-9))
        throw Error(ErrorKind::InvariantFailure, "H2: projection Lipschitz bound L violated", dp / d);
    }
  }
  const double chi = b.secant_deviation(b.eps1);
  if (!(chi < 0.25)) throw Error(ErrorKind::InvariantFailure, "H1/H3: secant deviation chi(eps1) must be below 1/4", chi);
  // H4: every centre vector of length ≤ δ0 is hit by the chart
  const double phi_max = 2.0 * std::asin(std::min(1.0, b.eps1 / (2.0 * b.circle_radius)));
  for (std::size_t i = 0; i < m; ++i) {
    if (b.frame_c[i].cols() == 0) continue;
    for (int k = -4; k <= 4; ++k) {
      const double s = b.delta0 * k / 4.0;
      const double ratio = s / b.circle_radius;
      if (std::abs(ratio) > 1.0 + 1e-12) throw Error(ErrorKind::InvariantFailure, "H4: centre ball not covered", s);
      const double phi = std::asin(std::clamp(ratio, -1.0, 1.0));
      if (std::abs(phi) > phi_max + 1e-12) throw Error(ErrorKind::InvariantFailure, "H4: chart too small for delta0", phi);
      const Vec image = b.proj_c[i] * (circle_point(b.circle_radius, b.params[i] + phi) - b.samples[i]);
      const Vec target = b.frame_c[i].col(0) * s;
      if ((image - target).norm() > 1e-9 * std::max(1.0, b.circle_radius))
        throw Error(ErrorKind::InvariantFailure, "H4: chart image misses a centre vector", (image - target).norm());
    }
  }
}

ImmersedBase build_base(const std::string& id, int n_samples) {
  if (id == "nhim_circle") return make_circle_base(n_samples, 1.0, {radial, tangent, axis_z});
  if (id == "attracting_circle") {
    CircleFrames f{[](double th) {
                     Mat m(3, 2);
                     m << radial(th), axis_z(th);
                     return m;
                   },
                   tangent, [](double) { return Mat(3, 0); }};
    return make_circle_base(n_samples, 1.0, f);
  }
  if (id == "scalar_saddle") {
    const Mat fs = (Mat(2, 1) << 0, 1).finished();
    const Mat fu = (Mat(2, 1) << 1, 0).finished();
    return make_point_base(Vec::Zero(2), fs, fu);
  }
  throw Error(ErrorKind::UnknownProblem, "no immersed base for problem " + id);
}

std::pair<double, Vec> NhimModel::to_tubular(const Vec& p) const {
  const auto& b = base;
  if (b.kind == ImmersedBase::Kind::Point) {
    Vec w(ds + du);
    w << b.frame_s[0].transpose() * (p - b.samples[0]), b.frame_u[0].transpose() * (p - b.samples[0]);
    return {0.0, w};
  }
  std::size_t best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < b.samples.size(); ++i) {
    const double d = (p - b.samples[i]).norm();
    if (d < bd) bd = d, best = i;
  }
  const double r = b.circle_radius;
  double th = b.params[best];
  bool converged = false;
  for (int it = 0; it < 30; ++it) {
    const Vec m = circle_point(r, th);
    const Vec dm = r * tangent(th);
    const Vec ddm = -r * radial(th);
    const double g = (p - m).dot(dm);
    const double dg = -dm.squaredNorm() + (p - m).dot(ddm);
    if (dg >= 0) break;  // outside the focal radius the projection is not unique
    const double step = g / dg;
    th -= step;
    if (std::abs(step) < 1e-14) {
      converged = true;
      break;
    }
  }
  if (!converged) throw Error(ErrorKind::TubeEscape, "nearest-point projection onto the circle failed");
  th = wrap_angle(th);
  const Vec d = p - circle_point(r, th);
  Vec w(ds + du);
  const Mat fs = b.frame_s.empty() ? Mat(3, 0) : Mat(Mat(3, ds));
  // frames are evaluated at the projected angle, not the sample
  Mat es(3, ds), eu(3, du);
  if (ds) es = ds == 1 ? radial(th) : (Mat(3, 2) << radial(th), axis_z(th)).finished();
  if (du) eu = axis_z(th);
  (void)fs;
  if (ds) w.head(ds) = es.transpose() * d;
  if (du) w.tail(du) = eu.transpose() * d;
  if (w.norm() > tube_radius) throw Error(ErrorKind::TubeEscape, "point lies outside the tube", w.norm());
  return {th, w};
}

Vec NhimModel::tubular_rhs(double theta, const Vec& w) const {
  if (tubular_field) return tubular_field(theta, w);
  // pull the ambient field back through the chart
  const int n = 1 + ds + du;
  Vec q(n);
  q << theta, w;
  auto chart = [&](const Vec& v) { return to_ambient(v(0), v.tail(n - 1)); };
  Mat jac(base.ambient_dim, n);
  const double h = 1e-6;
  for (int k = 0; k < n; ++k) {
    Vec a = q, c = q;
    a(k) += h;
    c(k) -= h;
    jac.col(k) = (chart(a) - chart(c)) / (2 * h);
  }
  return jac.colPivHouseholderQr().solve(ambient_field(chart(q)));
}

NhimModel trichotomy_circle(double eta, int n_samples) {
  NhimModel m;
  m.id = "nhim_circle";
  m.base = build_base("nhim_circle", n_samples);
  m.ds = 1;
  m.du = 1;
  m.nu = 1.0;
  m.js = Mat::Constant(1, 1, -2.0);
  m.ju = Mat::Constant(1, 1, 4.0);
  m.eps_u = std::abs(eta);
  m.eta = eta;
  m.tubular_field = [eta](double th, const Vec& w) {
    return Vec((Eigen::Vector3d() << 1.0, -2.0 * w(0), 4.0 * w(1) + eta * std::cos(th)).finished());
  };
  m.to_ambient = [](double th, const Vec& w) {
    return Vec((Eigen::Vector3d() << (1 + w(0)) * std::cos(th), (1 + w(0)) * std::sin(th), w(1)).finished());
  };
  m.ambient_field = [eta](const Vec& p) {
    const double r = std::hypot(p(0), p(1));
    const double th = std::atan2(p(1), p(0));
    const double dr = -2.0 * (r - 1.0);
    return Vec((Eigen::Vector3d() << dr * p(0) / r - p(1), dr * p(1) / r + p(0), 4.0 * p(2) + eta * std::cos(th))
                   .finished());
  };
  return m;
}

NhimModel attracting_circle(double eta, int n_samples) {
  NhimModel m;
  m.id = "attracting_circle";
  m.base = build_base("attracting_circle", n_samples);
  m.ds = 2;
  m.du = 0;
  m.nu = 1.0;
  m.js = (Mat(2, 2) << -2.0, 0.0, 0.0, -4.0).finished();
  m.ju = Mat(0, 0);
  m.eps_s = std::abs(eta);
  m.eta = eta;
  m.tubular_field = [eta](double th, const Vec& w) {
    return Vec((Eigen::Vector3d() << 1.0, -2.0 * w(0), -4.0 * w(1) + eta * std::cos(th)).finished());
  };
  m.to_ambient = [](double th, const Vec& w) {
    return Vec((Eigen::Vector3d() << (1 + w(0)) * std::cos(th), (1 + w(0)) * std::sin(th), w(1)).finished());
  };
  m.ambient_field = [eta](const Vec& p) {
    const double r = std::hypot(p(0), p(1));
    const double th = std::atan2(p(1), p(0));
    const double dr = -2.0 * (r - 1.0);
    return Vec((Eigen::Vector3d() << dr * p(0) / r - p(1), dr * p(1) / r + p(0), -4.0 * p(2) + eta * std::cos(th))
                   .finished());
  };
  return m;
}

EvolutionProblem bundle_problem(const NhimModel& model, double theta, BundleKind kind) {
  const Layout l{kind, model.ds, model.du};
  EvolutionProblem p;
  p.id = model.id + (kind == BundleKind::CenterStable ? "/cs" : "/s");
  p.generator = block_generator(model, l);
  p.splitting = block_splitting(p.generator, l.dim_x());
  const double row_x = kind == BundleKind::CenterStable ? std::max(model.eps_c, model.eps_s) : model.eps_s;
  const double row_y = kind == BundleKind::CenterStable ? model.eps_u : std::max(model.eps_c, model.eps_u);
  p.eps_s = row_x;
  p.eps_u = row_y;
  p.eps = std::max(row_x, row_y);
  p.lipschitz_radius = model.tube_radius;
  const Mat a = p.generator;
  const NhimModel m = model;
  p.nonlinearity = [m, l, a, theta](double tau, const Vec& z, Vec& out) {
    Vec w(m.ds + m.du);
    if (m.ds) w.head(m.ds) = z.segment(l.s0(), m.ds);
    if (m.du) w.tail(m.du) = z.segment(l.u0(), m.du);
    const Vec v = m.tubular_rhs(theta + m.nu * tau + z(l.theta()), retract(w, m.tube_radius));
    out(l.theta()) = v(0) - m.nu;
    if (m.ds) out.segment(l.s0(), m.ds) = v.segment(1, m.ds);
    if (m.du) out.segment(l.u0(), m.du) = v.segment(1 + m.ds, m.du);
    out.noalias() -= a * z;
  };
  return p;
}

GeneratingCorrespondence bundle_correspondence(const NhimModel& model, double t, double theta, BundleKind kind,
                                               const SolverOptions& opts) {
  const auto p = bundle_problem(model, theta, kind);
  const auto inner = cocycle_correspondence(p, t, 0.0, opts);
  const Layout l{kind, model.ds, model.du};
  const double radius = model.tube_radius;
  return GeneratingCorrespondence(inner.dims(), [inner, l, radius](const Vec& x1, const Vec& y2) {
    // normal components of the boundary data must stay in the tube
    double normal = 0.0;
    if (l.kind == BundleKind::CenterStable) {
      normal = std::max(x1.size() > 1 ? x1.tail(x1.size() - 1).cwiseAbs().maxCoeff() : 0.0,
                        y2.size() ? y2.cwiseAbs().maxCoeff() : 0.0);
    } else {
      normal = std::max(x1.size() ? x1.cwiseAbs().maxCoeff() : 0.0,
                        y2.size() > 1 ? y2.tail(y2.size() - 1).cwiseAbs().maxCoeff() : 0.0);
    }
    if (normal > radius) throw Error(ErrorKind::TubeEscape, "boundary data leave the tube", normal);
    return inner.eval(x1, y2);
  });
}

ABCertificate bundle_certificate(const NhimModel& model, BundleKind kind, double eps1) {
  const auto p = bundle_problem(model, 0.0, kind);
  return gap_certificate(p.splitting.mu_s, p.splitting.mu_u, p.eps_s, p.eps_u, std::nullopt, std::nullopt, eps1);
}

namespace {

GraphCocycle cs_cocycle(const NhimModel& model, const SolverOptions& opts) {
  GraphCocycle c;
  c.dim_x = model.ds;
  c.dim_y = model.du;
  c.samples = model.base.params;
  c.period = kTwoPi;
  c.base_step = kTwoPi / (model.base.params.size() * model.nu);
  const double nu = model.nu;
  const int ds = model.ds;
  c.at = [model, opts](double t, double w) { return bundle_correspondence(model, t, w, BundleKind::CenterStable, opts); };
  c.base_flow = [nu](double w, double t) { return wrap_angle(w + nu * t); };
  c.embed = [ds](double, const Vec& s) {
    Vec x(1 + ds);
    x << 0.0, s;
    return x;
  };
  c.transport = [ds](double img, const Vec& x) {
    return std::pair<double, Vec>{wrap_angle(img + x(0)), x.tail(ds)};
  };
  return c;
}

GraphCocycle cu_cocycle_of(const NhimModel& model, const SolverOptions& opts) {
  GraphCocycle s;
  s.dim_x = model.ds;
  s.dim_y = 1 + model.du;
  s.samples = model.base.params;
  s.period = kTwoPi;
  s.base_step = kTwoPi / (model.base.params.size() * model.nu);
  const double nu = model.nu;
  s.at = [model, opts](double t, double w) { return bundle_correspondence(model, t, w, BundleKind::Stable, opts); };
  s.base_flow = [nu](double w, double t) { return wrap_angle(w + nu * t); };
  GraphCocycle d = dual_cocycle(s);
  const int du = model.du;
  d.dim_x = du;
  d.embed = [du](double, const Vec& u) {
    Vec x(1 + du);
    x << 0.0, u;
    return x;
  };
  d.transport = [du](double img, const Vec& x) {
    return std::pair<double, Vec>{wrap_angle(img + x(0)), x.tail(du)};
  };
  return d;
}

SectionSpec section_for(const NhimModel& model) {
  SectionSpec s;
  s.mode = model.eta != 0.0 ? SectionMode::YBounded : SectionMode::InvariantZero;
  s.eps1_fn = [](double) { return 1.0; };
  return s;
}

/// Spectral projections of the tubular linearisation, scaled so that the
/// angle coordinate measures arc length.
double projection_drift(const NhimModel& model) {
  const int n = 1 + model.ds + model.du;
  double worst = 0.0;
  double cut = std::numeric_limits<double>::infinity();
  for (const Mat* blk : {&model.js, &model.ju})
    if (blk->size()) {
      Eigen::EigenSolver<Mat> es(*blk);
      cut = std::min(cut, 0.5 * es.eigenvalues().real().cwiseAbs().minCoeff());
    }
  if (!std::isfinite(cut)) return 0.0;
  const double r = model.base.circle_radius;
  for (double th : model.base.params) {
    Mat d(n, n);
    const double h = 1e-6;
    for (int k = 0; k < n; ++k) {
      Vec a = Vec::Zero(n), c = Vec::Zero(n);
      a(k) = h;
      c(k) = -h;
      d.col(k) = (model.tubular_rhs(th + a(0), a.tail(n - 1)) - model.tubular_rhs(th + c(0), c.tail(n - 1))) / (2 * h);
    }
    Mat scale = Mat::Identity(n, n);
    scale(0, 0) = r;
    d = scale * d * scale.inverse();
    Eigen::EigenSolver<Mat> es(d);
    const Eigen::MatrixXcd v = es.eigenvectors();
    const Eigen::MatrixXcd w = v.inverse();
    for (int kind = 0; kind < 3; ++kind) {
      Eigen::MatrixXcd ph = Eigen::MatrixXcd::Zero(n, n);
      for (int k = 0; k < n; ++k) {
        const double re = es.eigenvalues()(k).real();
        const int cls = re < -cut ? 0 : (re > cut ? 2 : 1);
        if (cls == kind) ph += v.col(k) * w.row(k);
      }
      Mat coord = Mat::Zero(n, n);
      if (kind == 1) coord(0, 0) = 1.0;
      if (kind == 0)
        for (int k = 0; k < model.ds; ++k) coord(1 + k, 1 + k) = 1.0;
      if (kind == 2)
        for (int k = 0; k < model.du; ++k) coord(1 + model.ds + k, 1 + model.ds + k) = 1.0;
      worst = std::max(worst, norm2(Mat(ph.real()) - coord));
    }
  }
  return worst;
}

double projection_amplitude(const ImmersedBase& b) {
  // fit the oscillation of Π against chord length and keep the ε → 0 intercept
  if (b.kind == ImmersedBase::Kind::Point) return 0.0;
  const std::size_t m = b.samples.size();
  std::vector<double> xs, ys;
  for (std::size_t k = 1; k <= 3; ++k) {
    double amp = 0.0, dist = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t j = (i + k) % m;
      dist = std::max(dist, (b.samples[j] - b.samples[i]).norm());
      for (const auto* pr : {&b.proj_s, &b.proj_c, &b.proj_u}) amp = std::max(amp, norm2((*pr)[j] - (*pr)[i]));
    }
    xs.push_back(dist);
    ys.push_back(amp);
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) mx += xs[i], my += ys[i];
  mx /= xs.size();
  my /= ys.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) sxy += (xs[i] - mx) * (ys[i] - my), sxx += (xs[i] - mx) * (xs[i] - mx);
  return std::max(0.0, my - (sxy / sxx) * mx);
}

detail::json gates_json(const std::vector<GateEntry>& gates) {
  detail::json a = detail::json::array();
  for (const auto& g : gates) a.push_back({{"name", g.name}, {"value", g.value}, {"threshold", g.threshold}, {"pass", g.pass}});
  return a;
}

}  // namespace

std::vector<Vec> integrate_ambient(const NhimModel& model, const Vec& p0, double horizon, double dt) {
  if (!(dt > 0) || horizon < 0) throw Error(ErrorKind::ParamOutOfRange, "integration needs dt > 0 and horizon >= 0");
  const int n = static_cast<int>(std::ceil(horizon / dt - 1e-12));
  const double h = n ? horizon / n : 0.0;
  std::vector<Vec> out{p0};
  Vec p = p0;
  const auto& f = model.ambient_field;
  for (int k = 0; k < n; ++k) {
    const Vec k1 = f(p), k2 = f(p + 0.5 * h * k1), k3 = f(p + 0.5 * h * k2), k4 = f(p + h * k3);
    p += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    if (!p.allFinite()) throw Error(ErrorKind::OrbitLeavesTube, "orbit diverged", (k + 1) * h);
    try {
      model.to_tubular(p);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::TubeEscape) throw Error(ErrorKind::OrbitLeavesTube, "orbit left the tube", (k + 1) * h);
      throw;
    }
    out.push_back(p);
  }
  return out;
}

std::string CenterStableResult::to_json() const {
  detail::json j;
  j["certificate"] = detail::json::parse(certificate.to_json());
  j["graph"] = detail::json::parse(h_cs.to_json_meta());
  j["gates"] = gates_json(gates);
  j["hypotheses"] = hypotheses;
  j["chi_star"] = chi_star;
  j["lipschitz_bound"] = lipschitz_bound;
  j["b_constant"] = b_constant;
  j["lambda_cs_measured"] = lambda_cs_measured;
  return j.dump(2);
}

CenterStableResult center_stable_persist(const NhimModel& model, const NhimParams& params, const GraphFamily* initial) {
  if (model.base.kind != ImmersedBase::Kind::Circle)
    throw Error(ErrorKind::ParamOutOfRange, "center-stable persistence runs on circle bases");
  if (model.ds < 1) throw Error(ErrorKind::ParamOutOfRange, "model needs a normal-stable direction");
  verify_base(model.base);
  CenterStableResult r;
  r.certificate = bundle_certificate(model, BundleKind::CenterStable);
  r.cocycle = cs_cocycle(model, params.solver);
  r.chi_star = model.base.chi(model.base.eps1);

  GraphOptions go;
  go.t0 = params.t0;
  go.nodes_per_axis = params.nodes;
  go.radius = params.sigma;
  go.tol = params.tol;
  go.threads = params.threads;
  go.initial = initial;
  const SectionSpec section = section_for(model);
  r.h_cs = invariant_graph(r.cocycle, section, {r.certificate}, go);
  const double t0 = r.h_cs.t0;

  // smallness gates
  const auto& g = params.gates;
  double xi1 = 0.0;
  for (std::size_t i = 0; i < model.base.samples.size(); ++i) {
    const double th = model.base.params[i];
    const auto orbit = integrate_ambient(model, model.base.samples[i], t0, t0 / 50.0);
    for (std::size_t k = 0; k < orbit.size(); ++k) {
      const double t = t0 * k / (orbit.size() - 1);
      xi1 = std::max(xi1, (orbit[k] - circle_point(model.base.circle_radius, th + model.nu * t)).norm());
    }
  }
  double eta = 0.0;
  for (const auto& e : r.h_cs.eta_profile)
    if (std::abs(e.t - t0) < 1e-15) eta = std::max(eta, e.eta);
  r.gates = {{"xi", projection_amplitude(model.base), g.xi, true},
             {"xi1", xi1, g.xi1, true},
             {"xi2", projection_drift(model), g.xi2, true},
             {"eta", eta, g.eta, true},
             {"chi", r.chi_star, g.chi, true}};
  for (auto& e : r.gates) e.pass = e.value <= e.threshold;

  const auto k = r.certificate.constants_at(t0);
  r.lipschitz_bound = (1.0 + r.chi_star) * k.beta_prime + r.chi_star;
  r.b_constant = 2.0 * r.certificate.c * std::pow(r.certificate.lambda_s, t0) * r.certificate.beta;
  r.lambda_cs_measured = r.h_cs.x_map_lip;
  r.hypotheses = {{"A1_chi_eps1", r.chi_star},
                  {"A2_inflow_offset", 0.0},  // rigid rotation maps Σ onto itself
                  {"A3_angle_alpha_beta_prime", k.alpha * k.beta_prime},
                  {"A3_spectral_lambda_u_lambda_cs", std::pow(r.certificate.lambda_u * r.certificate.lambda_s, t0)},
                  {"A3_s_contraction_B", r.b_constant},
                  {"graph_lipschitz", r.h_cs.lip_estimate},
                  {"graph_lipschitz_bound", r.lipschitz_bound},
                  {"theta", r.h_cs.theta}};
  if (k.alpha * k.beta_prime >= 0.5 && params.enforce_gates)
    throw Error(ErrorKind::HypothesisFailure, "A3: angle condition alpha * beta' < 1/2", k.alpha * k.beta_prime);
  if (params.enforce_gates)
    for (const auto& e : r.gates)
      if (!e.pass) throw Error(ErrorKind::HypothesisFailure, "smallness gate " + e.name + " failed", e.value);
  return r;
}

Vec TrichotomyGraphs::center_at(double theta) const {
  const std::size_t n = sigma_c.size();
  const double pos = wrap_angle(theta) / kTwoPi * n;
  std::size_t i = static_cast<std::size_t>(std::floor(pos)) % n;
  const double w = pos - std::floor(pos);
  return (1.0 - w) * sigma_c[i] + w * sigma_c[(i + 1) % n];
}

std::string TrichotomyGraphs::to_csv() const {
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < theta.size(); ++i) rows.push_back({theta[i], 1.0 + sigma_c[i](0), sigma_c[i](sigma_c[i].size() - 1)});
  return io::csv_table({"theta", "r", "z"}, rows);
}

TrichotomyGraphs trichotomy_persist(const NhimModel& model, const NhimParams& params) {
  if (model.du < 1 || model.ds < 1)
    throw Error(ErrorKind::HypothesisFailure, "B3: trichotomy needs stable and unstable normal directions");
  TrichotomyGraphs g;
  g.cs = center_stable_persist(model, params);
  g.cu_cocycle = cu_cocycle_of(model, params.solver);
  g.cu_certificate = bundle_certificate(model, BundleKind::Stable).dual();
  GraphOptions go;
  go.t0 = params.t0;
  go.nodes_per_axis = params.nodes;
  go.radius = params.rho;
  go.tol = params.tol;
  go.threads = params.threads;
  g.h_cu = invariant_graph(g.cu_cocycle, section_for(model), {g.cu_certificate}, go);
  g.sigma = params.sigma;
  g.rho = params.rho;
  g.eps_chart = model.base.eps1;
  g.theta = model.base.params;

  const double chi = g.cs.chi_star;
  g.mu_cs = g.cs.lipschitz_bound;
  g.mu_cu = (1.0 + chi) * g.cu_certificate.constants_at(g.h_cu.t0).beta_prime + chi;
  g.mu_c = std::max(g.mu_cs, g.mu_cu);

  // Σᶜ: s = h_cu(h_cs(s)) per sample
  for (std::size_t i = 0; i < g.theta.size(); ++i) {
    Vec s = Vec::Zero(model.ds), u = Vec::Zero(model.du);
    bool ok = false;
    for (int it = 0; it < 200; ++it) {
      u = g.cs.h_cs.eval(i, s);
      const Vec sn = g.h_cu.eval(i, u);
      const double d = (sn - s).norm();
      s = sn;
      if (d <= 0.1 * params.tol) {
        ok = true;
        break;
      }
    }
    if (!ok) throw Error(ErrorKind::IntersectionFailure, "graphs do not intersect transversally", g.theta[i]);
    u = g.cs.h_cs.eval(i, s);
    Vec c(model.ds + model.du);
    c << s, u;
    g.sigma_c.push_back(c);
  }

  // invariance of Σᶜ: forward along W^{cs}, backward along W^{cu}
  const double t0 = g.cs.h_cs.t0;
  for (double t : {0.5 * t0, t0}) {
    double res = 0.0;
    const auto k = g.cs.certificate.constants_at(t);
    for (std::size_t i = 0; i < g.theta.size(); ++i) {
      const auto st = induced_map(g.cs.cocycle, g.cs.h_cs, g.theta[i], g.sigma_c[i].head(model.ds), t, k, 0.1 * params.tol);
      const Vec c = g.center_at(st.omega);
      res = std::max(res, std::max((st.x - c.head(model.ds)).norm(), (st.y - c.tail(model.du)).norm()));
    }
    g.sigma_c_residual[t] = res;
  }
  {
    double res = 0.0;
    const double tb = g.h_cu.t0;
    const auto k = g.cu_certificate.constants_at(tb);
    for (std::size_t i = 0; i < g.theta.size(); ++i) {
      const auto st = induced_map(g.cu_cocycle, g.h_cu, g.theta[i], g.sigma_c[i].tail(model.du), tb, k, 0.1 * params.tol);
      const Vec c = g.center_at(st.omega);
      res = std::max(res, std::max((st.x - c.tail(model.du)).norm(), (st.y - c.head(model.ds)).norm()));
    }
    g.sigma_c_residual[-tb] = res;
  }
  return g;
}

TubeOrbit cs_orbit(const NhimModel& model, const CenterStableResult& cs, double theta0, const Vec& s0, int steps) {
  TubeOrbit o;
  const double t0 = cs.h_cs.t0;
  const auto k = cs.certificate.constants_at(t0);
  double th = wrap_angle(theta0), unwrapped = theta0;
  Vec s = s0;
  for (int n = 0; n <= steps; ++n) {
    Vec w(model.ds + model.du);
    w << s, cs.h_cs.eval_at(th, s);
    o.times.push_back(n * t0);
    o.theta.push_back(unwrapped);
    o.w.push_back(w);
    if (n == steps) break;
    const auto st = induced_map(cs.cocycle, cs.h_cs, th, s, t0, k, 1e-13);
    unwrapped += model.nu * t0 + wrap_pi(st.omega - wrap_angle(th + model.nu * t0));
    th = st.omega;
    s = st.x;
  }
  return o;
}

std::string TrackingReport::to_json() const {
  detail::json j;
  j["shadow_phase"] = shadow_phase;
  j["fitted_rate"] = fitted_rate;
  j["expected_rate"] = expected_rate;
  j["times"] = times;
  j["distances"] = distances;
  return j.dump(2);
}

TrackingReport tracking_check(const NhimModel& model, const TrichotomyGraphs& g, const TubeOrbit& orbit) {
  if (orbit.times.size() < 3) throw Error(ErrorKind::ParamOutOfRange, "tracking needs at least three orbit samples");
  for (const auto& w : orbit.w)
    if (!w.allFinite() || w.norm() > model.tube_radius)
      throw Error(ErrorKind::OrbitLeavesTube, "orbit sample outside the tube", w.norm());
  TrackingReport r;
  const double tn = orbit.times.back();
  r.shadow_phase = orbit.theta.back() - model.nu * tn;
  for (std::size_t k = 0; k < orbit.times.size(); ++k) {
    const double phase = r.shadow_phase + model.nu * orbit.times[k];
    const Vec zbar = model.to_ambient(phase, g.center_at(phase));
    const Vec z = model.to_ambient(orbit.theta[k], orbit.w[k]);
    r.times.push_back(orbit.times[k]);
    r.distances.push_back((z - zbar).norm());
  }
  r.fitted_rate = fit_decay_rate(r.times, r.distances, 1e-11);
  Eigen::EigenSolver<Mat> es(model.js);
  r.expected_rate = std::exp(es.eigenvalues().real().maxCoeff());
  return r;
}

std::vector<Vec> LeafResult::ambient_points(const NhimModel& model) const {
  std::vector<Vec> pts;
  const int ds = model.ds, du = model.du;
  for (int i = 0; i < fiber.grid.size(); ++i) {
    const Vec x = fiber.grid.node(i);
    const Vec y = fiber.graphs[0].col(i);  // (θ̃, u)
    Vec w(ds + du);
    w.head(ds) = w0.head(ds) + x;
    if (du) w.tail(du) = w0.tail(du) + y.tail(du);
    pts.push_back(model.to_ambient(theta0 + y(0), w));
  }
  return pts;
}

LeafResult strong_foliation_leaf(const NhimModel& model, const CenterStableResult& cs, double theta0, const Vec& w0,
                                 double sigma0, const NhimParams& params, double horizon) {
  const int ds = model.ds, du = model.du;
  if (w0.size() != ds + du) throw Error(ErrorKind::DimensionMismatch, "w0 must hold (s, u)");
  const Vec s0 = w0.head(ds);
  if (du) {
    const double off = (w0.tail(du) - cs.h_cs.eval_at(theta0, s0)).norm();
    if (off > std::max(1e-6, 100 * params.tol))
      throw Error(ErrorKind::NotOnCenterStable, "z0 is not on the center-stable graph", off);
  }
  const double dt = cs.h_cs.t0;
  const double padding = horizon;
  const int steps = static_cast<int>(std::ceil((horizon + padding) / dt - 1e-9));
  const TubeOrbit orb = cs_orbit(model, cs, theta0, s0, steps);

  // deviation state (s, θ̃, u): X = s, Y = (θ̃, u)
  const Layout l{BundleKind::Stable, ds, du};
  const Mat a = block_generator(model, l);
  EvolutionProblem proto;
  proto.generator = a;
  proto.splitting = block_splitting(a, ds);
  proto.eps_s = model.eps_s;
  proto.eps_u = std::max(model.eps_c, model.eps_u);
  proto.eps = std::max(proto.eps_s, proto.eps_u);
  const ABCertificate cert =
      gap_certificate(proto.splitting.mu_s, proto.splitting.mu_u, proto.eps_s, proto.eps_u, std::nullopt, std::nullopt);
  const SolverOptions so = params.solver;
  const int grid_n = so.steps_for(dt);
  const double h = dt / grid_n;
  const NhimModel m = model;
  auto full_rhs = [m](const Vec& q) {  // q = (θ, w)
    return m.tubular_rhs(q(0), retract(q.tail(q.size() - 1), m.tube_radius));
  };

  GraphCocycle dev;
  dev.dim_x = ds;
  dev.dim_y = 1 + du;
  dev.base_flow = [](double w, double t) { return w + t; };
  auto orbit_theta = orb.theta;
  auto orbit_w = orb.w;
  dev.at = [=](double t, double omega) {
    const std::size_t k = static_cast<std::size_t>(std::llround(omega / dt));
    // orbit of z0 on the solver grid of this step, by RK4 from the sample
    const int n = so.steps_for(t);
    const double hh = t / n;
    std::vector<Vec> table;
    Vec q(1 + ds + du);
    q << orbit_theta.at(k), orbit_w.at(k);
    table.push_back(q);
    for (int j = 0; j < n; ++j) {
      const Vec k1 = full_rhs(q), k2 = full_rhs(q + 0.5 * hh * k1), k3 = full_rhs(q + 0.5 * hh * k2),
                k4 = full_rhs(q + hh * k3);
      q += hh / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
      table.push_back(q);
    }
    EvolutionProblem p = proto;
    p.id = m.id + "/leaf";
    p.nonlinearity = [table, hh, a, full_rhs, l, ds, du](double tau, const Vec& d, Vec& out) {
      const std::size_t j = std::min<std::size_t>(table.size() - 1, static_cast<std::size_t>(std::llround(tau / hh)));
      const Vec& q0 = table[j];
      Vec q1 = q0;
      q1(0) += d(l.theta());
      if (ds) q1.segment(1, ds) += d.segment(l.s0(), ds);
      if (du) q1.segment(1 + ds, du) += d.segment(l.u0(), du);
      const Vec dv = full_rhs(q1) - full_rhs(q0);
      out(l.theta()) = dv(0);
      if (ds) out.segment(l.s0(), ds) = dv.segment(1, ds);
      if (du) out.segment(l.u0(), du) = dv.segment(1 + ds, du);
      out.noalias() -= a * d;
    };
    return cocycle_correspondence(p, t, 0.0, so);
  };
  (void)h;
  (void)grid_n;

  BaseOrbit base;
  for (std::size_t k = 0; k < orb.times.size(); ++k) {
    base.times.push_back(orb.times[k]);
    Vec q(1 + ds + du);
    q << orb.theta[k], orb.w[k];
    base.states.push_back(q);
  }
  LeafResult r;
  r.theta0 = theta0;
  r.w0 = w0;
  r.fiber = strong_stable_fiber(dev, base, sigma0, cert, params.tol, params.nodes, horizon, padding);
  GraphFamily probe = GraphFamily::zeros({0.0}, 0.0, r.fiber.grid, r.fiber.dim_y);
  probe.values[0] = r.fiber.graphs[0];
  r.lipschitz = probe.node_lipschitz();
  const Vec x0 = Vec::Constant(ds, 0.5 * sigma0);
  std::vector<double> times(r.fiber.times.begin(), r.fiber.times.begin() + r.fiber.horizon_samples);
  r.fitted_rate = fit_decay_rate(times, r.fiber.separations(x0));
  if (ds == 1) {
    const double e = r.fiber.grid.spacing();
    const Vec gp = r.fiber.fiber_value(0, Vec::Constant(1, e)), gm = r.fiber.fiber_value(0, Vec::Constant(1, -e));
    Vec t(1 + 1 + du);
    t(0) = 1.0;
    t.tail(1 + du) = (gp - gm) / (2 * e);
    r.tangent = t / t.norm();
  }
  return r;
}

}  // namespace dichotomy
