#include <doctest.h>

#include <cmath>
#include <numbers>

#include "dichotomy/error.hpp"
#include "dichotomy/nhim.hpp"
#include "oracles.hpp"

using namespace dichotomy;

namespace {

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

// Secant deviation of n equally spaced samples on the unit circle: the chord
// over k steps makes angle kπ/n with the tangent.
double circle_secant_oracle(int n, double eps) {
  double chi = 0.0;
  for (int k = 1; k <= n / 2; ++k) {
    const double half = std::numbers::pi * k / n;
    if (2.0 * std::sin(half) <= eps) chi = std::max(chi, std::sin(half));
  }
  return chi;
}

NhimParams coarse() {
  NhimParams p;
  p.nodes = 11;
  return p;
}

}  // namespace

TEST_CASE("catalog circle base satisfies its hypotheses") {
  const auto b = build_base("nhim_circle", 64);
  CHECK(b.kind == ImmersedBase::Kind::Circle);
  CHECK(b.samples.size() == 64);
  CHECK(b.ds() == 1);
  CHECK(b.dc() == 1);
  CHECK(b.du() == 1);
  verify_base(b);
  for (double eps : {0.05, 0.1, 0.2}) CHECK(b.secant_deviation(eps) == doctest::Approx(circle_secant_oracle(64, eps)));
  // the continuous circle has χ(ε) = ε/2; sampling only lowers it
  CHECK(b.secant_deviation(0.1) <= 0.05 + 1e-12);
  CHECK(b.chi(b.eps1) == doctest::Approx(circle_secant_oracle(64, b.eps1)));
  CHECK(b.delta0 > 0);
}

TEST_CASE("point base and corrupted projections") {
  Vec z = Vec::Zero(2);
  const auto p = make_point_base(z, Mat::Identity(2, 2).col(0), Mat::Identity(2, 2).col(1));
  CHECK(p.dc() == 0);
  CHECK(p.chi(0.1) == 0.0);
  CHECK(build_base("scalar_saddle", 1).kind == ImmersedBase::Kind::Point);

  auto b = build_base("nhim_circle", 64);
  std::swap(b.proj_s, b.proj_c);
  CHECK(kind_of([&] { verify_base(b); }) == ErrorKind::InvariantFailure);
}

TEST_CASE("bundle correspondence fixes the zero section without forcing") {
  const auto m = trichotomy_circle(0.0, 32);
  for (auto kind : {BundleKind::CenterStable, BundleKind::Stable}) {
    const auto h = bundle_correspondence(m, 0.5, 0.7, kind);
    auto [f, g] = h.eval(Vec::Zero(h.dims().x1), Vec::Zero(h.dims().y2));
    CHECK(f.norm() <= 1e-12);
    CHECK(g.norm() <= 1e-12);
  }
  const auto h = bundle_correspondence(m, 0.5, 0.0, BundleKind::CenterStable);
  Vec x = Vec::Zero(h.dims().x1);
  x(x.size() - 1) = 0.5;
  CHECK(kind_of([&] { h.eval(x, Vec::Zero(h.dims().y2)); }) == ErrorKind::TubeEscape);
}

TEST_CASE("unperturbed circle persists as itself") {
  const auto g = trichotomy_persist(trichotomy_circle(0.0, 32), coarse());
  for (const auto& v : g.sigma_c) CHECK(v.norm() <= 1e-10);
  for (const auto& e : g.cs.gates) CHECK(e.pass);
}

TEST_CASE("attracting circle has the whole tube as centre-stable set") {
  const auto cs = center_stable_persist(attracting_circle(1e-2, 32), coarse());
  CHECK(cs.h_cs.dim_y == 0);
}

TEST_CASE("perturbed circle matches the linear periodic response") {
  const double eta = 1e-2;
  const auto g = trichotomy_persist(trichotomy_circle(eta, 64), coarse());
  const auto [p, q] = oracle::periodic_linear_response(4.0, eta);
  double err = 0.0;
  for (std::size_t i = 0; i < g.theta.size(); ++i) {
    const double th = g.theta[i];
    err = std::max(err, std::abs(g.sigma_c[i](1) - (p * std::cos(th) + q * std::sin(th))));
    err = std::max(err, std::abs(g.sigma_c[i](0)));
  }
  CHECK(err <= 1e-6);
  for (auto [t, r] : g.sigma_c_residual) CHECK(r <= 1e-8);
}

TEST_CASE("center-stable orbits track the invariant circle") {
  const auto m = trichotomy_circle(1e-2, 64);
  const auto g = trichotomy_persist(m, coarse());
  const auto orb = cs_orbit(m, g.cs, 0.3, Vec::Constant(1, 0.05), 20);
  const auto r = tracking_check(m, g, orb);
  CHECK(r.expected_rate == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
  CHECK(std::abs(r.fitted_rate / r.expected_rate - 1.0) <= 0.05);

  auto off = orb;
  off.w.back()(1) = 0.5;
  CHECK(kind_of([&] { tracking_check(m, g, off); }) == ErrorKind::OrbitLeavesTube);
}

TEST_CASE("strong stable leaves are radial") {
  const auto m = trichotomy_circle(1e-2, 64);
  const auto p = coarse();
  const auto cs = center_stable_persist(m, p);
  Vec w0(2);
  w0 << 0.03, cs.h_cs.eval_at(0.3, Vec::Constant(1, 0.03))(0);
  const auto leaf = strong_foliation_leaf(m, cs, 0.3, w0, 0.05, p, 10.0);
  CHECK(std::abs(leaf.tangent(0)) >= 1.0 - 1e-3);
  CHECK(std::abs(leaf.tangent(1)) <= 1e-3);
  CHECK(std::abs(leaf.fitted_rate / std::exp(-2.0) - 1.0) <= 0.05);

  Vec bad = w0;
  bad(1) += 0.01;
  CHECK(kind_of([&] { strong_foliation_leaf(m, cs, 0.3, bad, 0.05, p, 10.0); }) == ErrorKind::NotOnCenterStable);
}
