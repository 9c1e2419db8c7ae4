#include <doctest.h>

#include <cmath>
#include <numbers>

#include "dichotomy/ab_certificates.hpp"
#include "dichotomy/error.hpp"
#include "dichotomy/graph_transform.hpp"
#include "dichotomy/problems.hpp"

using namespace dichotomy;

namespace {

Mat s1(double v) { return Mat::Constant(1, 1, v); }

template <class F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::ParamOutOfRange;
}

SolverOptions fine_solver(double steps_per_unit = 400) {
  SolverOptions so;
  so.steps_per_unit = steps_per_unit;
  so.tol = 1e-13;
  return so;
}

struct SaddleRun {
  ProblemDescriptor d;
  GraphFamily g;
};

// Unstable manifold of the saddle as a graph over its unstable coordinate.
SaddleRun saddle_unstable(int nodes, double tol, const GraphFamily* initial = nullptr, double steps_per_unit = 400) {
  SaddleRun r{instantiate("scalar_saddle"), {}};
  const auto so = fine_solver(steps_per_unit);
  const auto p = r.d.problem;
  const auto cc = autonomous_cocycle(1, 1, [p, so](double t) { return cocycle_correspondence(p, t, 0.0, so); });
  GraphOptions go;
  go.nodes_per_axis = nodes;
  go.radius = 0.5;
  go.tol = tol;
  go.initial = initial;
  r.g = invariant_graph(dual_cocycle(cc), {}, {r.d.certificate().dual()}, go);
  return r;
}

// Scalar saddle written with its stable coordinate first; `reversed` flips time,
// which exchanges the roles of the two coordinates.
EvolutionProblem ordered_saddle(bool reversed, double r) {
  EvolutionProblem p;
  p.generator = Vec(Eigen::Vector2d(-1.0, 1.0)).asDiagonal();
  p.splitting = block_splitting(p.generator, 1);
  if (!reversed) {
    p.nonlinearity = [r](double, const Vec& z, Vec& out) {  // z = (y, x)
      const double x = std::clamp(z(1), -r, r);
      out(0) = x * x;
      out(1) = 0.0;
    };
    p.eps = p.eps_s = 2 * r;
  } else {
    p.nonlinearity = [r](double, const Vec& z, Vec& out) {  // z = (x, y)
      const double x = std::clamp(z(0), -r, r);
      out(0) = 0.0;
      out(1) = -x * x;
    };
    p.eps = p.eps_u = 2 * r;
  }
  return p;
}

}  // namespace

TEST_CASE("pullback of the zero graph under a decoupled linear map") {
  const double ls = 0.4, lu = 0.3;
  const auto h = linear_correspondence(s1(ls), s1(0), s1(0), s1(lu));
  const ABConstants k{0.5, 0.5, 0.5, 0.5, ls, lu};
  const auto f2 = GraphFamily::zeros({0.0}, 0.0, TensorGrid(1, 11, 1.0), 1);
  const auto r = pullback_graph_step(h, f2, k, 1e-14);
  for (int i = 0; i < f2.grid.size(); ++i) {
    CHECK(r.f1(0, i) == 0.0);
    CHECK(r.x1_map(0, i) == doctest::Approx(ls * f2.grid.node(i)(0)).epsilon(1e-14));
  }
  CHECK(r.domain_escapes == 0);
}

TEST_CASE("pullback of a constant graph through a coupled linear map") {
  const double ls = 0.4, lu = 0.3, a = 0.2, c = 0.25;
  const auto h = linear_correspondence(s1(ls), s1(a), s1(0), s1(lu));
  const ABConstants k{0.5, 0.5, 0.5, 0.5, ls, lu};
  auto f2 = GraphFamily::zeros({0.0}, 0.0, TensorGrid(1, 11, 1.0), 1);
  f2.values[0].setConstant(c);
  const auto r = pullback_graph_step(h, f2, k, 1e-14);
  for (int i = 0; i < f2.grid.size(); ++i) {
    CHECK(r.x1_map(0, i) == doctest::Approx(ls * f2.grid.node(i)(0) + a * c).epsilon(1e-13));
    CHECK(r.f1(0, i) == doctest::Approx(lu * c).epsilon(1e-13));
  }
}

TEST_CASE("pullback rejects a steep graph and an escaping map") {
  const auto grid = TensorGrid(1, 11, 1.0);
  auto steep = GraphFamily::zeros({0.0}, 0.0, grid, 1);
  for (int i = 0; i < grid.size(); ++i) steep.values[0](0, i) = 2.0 * grid.node(i)(0);
  const auto h = linear_correspondence(s1(0.5), s1(0), s1(0), s1(0.5));
  CHECK(kind_of([&] { pullback_graph_step(h, steep, ABConstants{1.0, 1.0, 1.0, 1.0, 0.5, 0.5}, 1e-12); }) ==
        ErrorKind::AngleConditionViolated);

  const auto expand = linear_correspondence(s1(3.0), s1(0), s1(0), s1(0.5));
  const auto flat = GraphFamily::zeros({0.0}, 0.0, grid, 1);
  CHECK(kind_of([&] { pullback_graph_step(expand, flat, ABConstants{0.5, 0.5, 0.5, 0.5, 3.0, 0.5}, 1e-12); }) ==
        ErrorKind::DomainEscape);
  std::vector<Vec> inputs;
  for (int i = 0; i < grid.size(); ++i) inputs.push_back(grid.node(i));
  const auto r = pullback_graph_step(
      expand, [&](const Vec& x, bool* esc) { return flat.eval(0, x, esc); }, 0.0, inputs,
      ABConstants{0.5, 0.5, 0.5, 0.5, 3.0, 0.5}, 1e-12);
  CHECK(r.domain_escapes > 0);
}

TEST_CASE("linear cocycle has the zero graph as its invariant graph") {
  const auto cc = autonomous_cocycle(1, 1, [](double t) {
    return linear_correspondence(s1(std::exp(-t)), s1(0), s1(0), s1(std::exp(-2 * t)));
  });
  const auto cert = gap_certificate(-1.0, 2.0, 0.0, 0.0);
  GraphOptions go;
  go.nodes_per_axis = 21;
  const auto g = invariant_graph(cc, {}, {cert}, go);
  CHECK(g.iterations == 1);
  CHECK(g.values[0].cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.section_offset[0] == 0.0);
}

TEST_CASE("saddle unstable manifold matches the parabola") {
  const auto r = saddle_unstable(401, 1e-11, nullptr, 1000);
  const auto& g = r.g;
  const auto& s = r.d.problem.splitting;
  double err = 0.0;
  for (int i = 0; i < g.grid.size(); ++i) {
    const double x = g.grid.node(i)(0) * s.basis_y(0, 0);
    const double y = g.values[0](0, i) * s.basis_x(1, 0);
    err = std::max(err, std::abs(y - x * x / 3.0));
  }
  CHECK(err <= 1e-5);
  CHECK(g.theta < 1.0);
  CHECK(g.invariance_residual <= 1e-11);
  // off t0 the residual carries the interpolation error h²|f''|/8
  const double h = g.grid.spacing();
  for (auto [t, res] : g.invariance_by_time) CHECK(res <= h * h / 4);
  for (std::size_t k = 1; k < g.increments.size(); ++k)
    if (g.increments[k - 1] > 1e-8) CHECK(g.increments[k] <= (g.theta + 0.05) * g.increments[k - 1]);
  CHECK(g.section_offset[0] <= g.offset_bound[0] + 1e-12);
  CHECK(g.lip_estimate <= r.d.certificate().dual().beta);

  const auto sm = smoothness_probe(g, ProbeOrder::First);
  REQUIRE(sm.derivative.size() == 1);
  REQUIRE(sm.derivative[0].size() == static_cast<std::size_t>(g.grid.size() - 2));
  double derr = 0.0;
  for (std::size_t j = 0; j < sm.derivative[0].size(); ++j) {
    const double x = g.grid.node(static_cast<int>(j) + 1)(0);
    derr = std::max(derr, std::abs(sm.derivative[0][j] - 2.0 * x / 3.0));
  }
  CHECK(derr <= 1e-4);
}

TEST_CASE("invariant graph does not depend on the initial graph") {
  const double tol = 1e-11;
  auto start = GraphFamily::zeros({0.0}, 0.0, TensorGrid(1, 61, 0.5), 1);
  for (int i = 0; i < start.grid.size(); ++i) start.values[0](0, i) = 0.05 * std::sin(3.0 * start.grid.node(i)(0));
  const auto a = saddle_unstable(61, tol);
  const auto b = saddle_unstable(61, tol, &start);
  CHECK(a.g.sup_distance(b.g) <= 2 * tol);
}

TEST_CASE("dual cocycle agrees with the time-reversed problem") {
  const double rad = 0.5, tol = 1e-11;
  const auto so = fine_solver();
  const auto fwd = ordered_saddle(false, rad), rev = ordered_saddle(true, rad);
  const auto cert = gap_certificate(-1.0, 1.0, 2 * rad, 0.0);
  GraphOptions go;
  go.nodes_per_axis = 41;
  go.radius = 0.5;
  go.tol = tol;
  go.extra_residuals = false;
  const auto cf = autonomous_cocycle(1, 1, [fwd, so](double t) { return cocycle_correspondence(fwd, t, 0.0, so); });
  const auto cr = autonomous_cocycle(1, 1, [rev, so](double t) { return cocycle_correspondence(rev, t, 0.0, so); });
  const auto gd = invariant_graph(dual_cocycle(cf), {}, {cert.dual()}, go);
  const auto gr = invariant_graph(cr, {}, {cert.dual()}, go);
  CHECK(gd.t0 == gr.t0);
  CHECK(gd.sup_distance(gr) <= 2 * tol);
}

TEST_CASE("local stable manifold of the saddle is its stable axis") {
  const auto d = instantiate("scalar_saddle", {{"radius", 0.3}});
  const auto cert = d.certificate();
  REQUIRE(cert.lambda_s < 1.0);
  const auto so = fine_solver();
  const auto p = d.problem;
  const auto cc = autonomous_cocycle(1, 1, [p, so](double t) { return cocycle_correspondence(p, t, 0.0, so); });
  GraphOptions go;
  go.nodes_per_axis = 21;
  go.tol = 1e-11;
  const auto g = local_stable_graph(cc, 0.3, {cert}, go);
  CHECK(g.grid.radius == 0.3);
  CHECK(g.values[0].cwiseAbs().maxCoeff() <= 1e-9);

  CHECK(kind_of([&] { local_stable_graph(cc, -1.0, {cert}, go); }) == ErrorKind::ParamOutOfRange);
  auto flat = cert;
  flat.lambda_s = 1.0;
  CHECK(kind_of([&] { local_stable_graph(cc, 0.3, {flat}, go); }) == ErrorKind::SpectralConditionViolated);
}

TEST_CASE("graph transform checks its hypotheses") {
  const auto cc = autonomous_cocycle(1, 1, [](double t) {
    return linear_correspondence(s1(std::exp(-t)), s1(0), s1(0), s1(std::exp(-t)));
  });
  auto cert = gap_certificate(-1.0, 1.0, 0.0, 0.0);
  auto neutral = cert;
  neutral.lambda_s = neutral.lambda_u = 1.0;
  CHECK(kind_of([&] { invariant_graph(cc, {}, {neutral}); }) == ErrorKind::SpectralConditionViolated);
  auto wide = cert;
  wide.alpha = wide.beta = 1.0;
  CHECK(kind_of([&] { invariant_graph(cc, {}, {wide}); }) == ErrorKind::AngleConditionViolated);
  GraphOptions go;
  go.max_t0_steps = 1;
  go.theta_target = 1e-6;
  CHECK(kind_of([&] { invariant_graph(cc, {}, {cert}, go); }) == ErrorKind::ThetaNotContractive);
}

TEST_CASE("forced periodic problem: section offset within its bound") {
  const auto d = instantiate("nonauto_scalar", {{"forcing", 0.05}, {"nu", 1.0}});
  const auto& p = d.problem;
  SolverOptions so;
  so.steps_per_unit = 100;
  GraphCocycle cc;
  cc.samples.clear();
  const double period = p.base.period;
  for (int i = 0; i < 16; ++i) cc.samples.push_back(period * i / 16);
  cc.period = period;
  cc.base_step = period / 16;
  cc.at = [p, so](double t, double w) { return cocycle_correspondence(p, t, w, so); };
  SectionSpec sec;
  sec.mode = SectionMode::YBounded;
  sec.eps1_fn = [](double) { return 1.0; };
  GraphOptions go;
  go.nodes_per_axis = 21;
  go.tol = 1e-9;
  go.extra_residuals = false;
  const auto g = invariant_graph(dual_cocycle(cc), sec, {d.certificate().dual()}, go);
  REQUIRE(g.section_offset.size() == 16);
  bool nonzero = false;
  for (std::size_t i = 0; i < 16; ++i) {
    CHECK(g.section_offset[i] <= g.offset_bound[i] + 1e-12);
    nonzero = nonzero || g.section_offset[i] > 1e-6;
  }
  CHECK(nonzero);
}

TEST_CASE("strong stable fibres of the saddle") {
  const auto d = instantiate("scalar_saddle", {{"radius", 0.01}});
  const auto cert = d.certificate();
  SolverOptions so;
  Vec z0(2);
  z0 << 0.0, 0.005;
  const auto orb = forward_orbit(d.problem, z0, 0.0, 0.5, 41, so);
  const auto cc = orbit_deviation_cocycle(d.problem, orb, so);
  const auto fib = strong_stable_fiber(cc, orb, 0.01, cert, 1e-12, 21, 10, 10);
  const auto seps = fib.separations(Vec::Constant(1, 0.005));
  const std::vector<double> ts(fib.times.begin(), fib.times.begin() + fib.horizon_samples);
  CHECK(std::abs(fit_decay_rate(ts, seps) / cert.lambda_s - 1.0) <= 0.05);

  // the x coordinate is decoupled: fibres are the vertical lines x = const
  std::vector<Mat> pts;
  for (double x0 : {1e-3, 2e-3}) {
    Vec w(2);
    w << x0, 0.005;
    const auto o = forward_orbit(d.problem, w, 0.0, 0.5, 13, so);
    const auto f = strong_stable_fiber(orbit_deviation_cocycle(d.problem, o, so), o, 0.01, cert, 1e-12, 21, 3, 3);
    CHECK(f.graphs[0].cwiseAbs().maxCoeff() <= 1e-9);
    Mat p(2, f.grid.size());
    for (int i = 0; i < f.grid.size(); ++i) {
      const Vec dev = d.problem.splitting.basis_x * f.grid.node(i) +
                      d.problem.splitting.basis_y * f.fiber_value(0, f.grid.node(i));
      p.col(i) = w + dev;
    }
    pts.push_back(p);
  }
  double gap = 1e300;
  for (int i = 0; i < pts[0].cols(); ++i)
    for (int j = 0; j < pts[1].cols(); ++j) gap = std::min(gap, (pts[0].col(i) - pts[1].col(j)).norm());
  CHECK(gap >= 0.9e-3);

  BaseOrbit bad = orb;
  bad.times[3] += 0.1;
  CHECK(kind_of([&] { strong_stable_fiber(cc, bad, 0.01, cert, 1e-12); }) == ErrorKind::OrbitInconsistent);
}

TEST_CASE("smoothness probes") {
  const TensorGrid grid(1, 21, 1.0);
  const auto zero = GraphFamily::zeros({0.0}, 0.0, grid, 1);
  const auto z = smoothness_probe(zero, ProbeOrder::First);
  CHECK(z.discrepancy == 0.0);
  for (double v : z.derivative[0]) CHECK(v == 0.0);

  CHECK(kind_of([&] { smoothness_probe(GraphFamily::zeros({0.0}, 0.0, TensorGrid(1, 3, 1.0), 1), ProbeOrder::First); }) ==
        ErrorKind::GridTooCoarse);
  CHECK(kind_of([&] { smoothness_probe(zero, ProbeOrder::Holder); }) == ErrorKind::GridTooCoarse);

  std::vector<double> samples;
  const int n = 32;
  for (int i = 0; i < n; ++i) samples.push_back(2 * std::numbers::pi * i / n);
  auto fam = GraphFamily::zeros(samples, 2 * std::numbers::pi, grid, 1);
  for (int s = 0; s < n; ++s)
    for (int i = 0; i < grid.size(); ++i) {
      const double x = grid.node(i)(0), w = samples[s];
      fam.values[s](0, i) = std::sin(w) * x * x + std::cos(2 * w) * x;
    }
  const auto h = smoothness_probe(fam, ProbeOrder::Holder);
  CHECK_FALSE(h.degenerate);
  CHECK(h.holder_exponent >= 0.9);
  CHECK(smoothness_probe(GraphFamily::zeros(samples, 2 * std::numbers::pi, grid, 1), ProbeOrder::Holder).degenerate);
}
