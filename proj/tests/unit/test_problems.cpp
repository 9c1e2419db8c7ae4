#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numbers>

#include "dichotomy/error.hpp"
#include "dichotomy/problems.hpp"

using namespace dichotomy;

namespace {

constexpr double kPi = std::numbers::pi;

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

std::vector<double> real_parts(const Mat& a) {
  Eigen::EigenSolver<Mat> es(a);
  std::vector<double> r;
  for (int i = 0; i < a.rows(); ++i) r.push_back(es.eigenvalues()(i).real());
  std::sort(r.begin(), r.end());
  return r;
}

}  // namespace

TEST_CASE("catalog lists every problem") {
  const auto ids = problem_ids();
  CHECK(ids.size() == 6);
  const auto listing = nlohmann::json::parse(problems_listing());
  CHECK(listing.size() == ids.size());
  for (const auto& id : ids) CHECK_FALSE(param_ranges(id).empty());
}

TEST_CASE("unknown problems and parameters are rejected") {
  CHECK(kind_of([] { instantiate("no_such_problem"); }) == ErrorKind::UnknownProblem);
  CHECK(kind_of([] { instantiate("scalar_saddle", {{"radius", 10.0}}); }) == ErrorKind::ParamOutOfRange);
  CHECK(kind_of([] { instantiate("scalar_saddle", {{"speed", 1.0}}); }) == ErrorKind::ParamOutOfRange);
  CHECK(kind_of([] { instantiate("elliptic_cylinder", {{"modes", 2.5}}); }) == ErrorKind::ParamOutOfRange);
}

TEST_CASE("saddle constants and its closed-form manifolds") {
  const auto d = instantiate("scalar_saddle");
  CHECK(d.problem.eps == doctest::Approx(1.0));
  CHECK(d.problem.splitting.mu_s == doctest::Approx(-1.0));
  CHECK(d.problem.splitting.mu_u == doctest::Approx(1.0));
  REQUIRE(d.oracle.kind == ProblemOracle::Kind::PlanarGraphs);
  // along x' = x the graph y = h(x) is invariant iff h'(x)·x = −h(x) + x²
  for (double x = -0.5; x <= 0.5; x += 0.05) {
    const double h = d.oracle.unstable_graph(x), dh = (d.oracle.unstable_graph(x + 1e-6) - d.oracle.unstable_graph(x - 1e-6)) / 2e-6;
    CHECK(std::abs(dh * x - (-h + x * x)) <= 1e-8);
    CHECK(d.oracle.stable_graph(x) == 0.0);
  }
}

TEST_CASE("elliptic cylinder has rates ±kπ and is ill-posed") {
  const auto d = instantiate("elliptic_cylinder", {{"modes", 3}});
  CHECK_FALSE(d.problem.well_posed);
  REQUIRE(d.mode_rates.size() == 3);
  const auto ev = real_parts(d.problem.generator);
  for (int k = 1; k <= 3; ++k) {
    CHECK(d.mode_rates[k - 1].rate_s == doctest::Approx(-k * kPi));
    CHECK(d.mode_rates[k - 1].rate_u == doctest::Approx(k * kPi));
    CHECK(ev[3 - k] == doctest::Approx(-k * kPi).epsilon(1e-10));
    CHECK(ev[2 + k] == doctest::Approx(k * kPi).epsilon(1e-10));
  }
  CHECK(d.problem.splitting.mu_s == doctest::Approx(-kPi).epsilon(1e-8));
  CHECK(d.problem.splitting.mu_u == doctest::Approx(kPi).epsilon(1e-8));
}

TEST_CASE("doubling the truncation keeps the leading modes") {
  for (const char* id : {"elliptic_cylinder", "spatial_rd"}) {
    const auto a = instantiate(id, {{"modes", 3}});
    const auto b = instantiate(id, {{"modes", 6}});
    REQUIRE(b.mode_rates.size() == 2 * a.mode_rates.size());
    for (std::size_t i = 0; i < a.mode_rates.size(); ++i) {
      CHECK(a.mode_rates[i].rate_s == doctest::Approx(b.mode_rates[i].rate_s));
      CHECK(a.mode_rates[i].rate_u == doctest::Approx(b.mode_rates[i].rate_u));
    }
    CHECK(a.problem.rate_s() == doctest::Approx(b.problem.rate_s()).epsilon(1e-8));
    CHECK(a.problem.rate_u() == doctest::Approx(b.problem.rate_u()).epsilon(1e-8));
  }
}

TEST_CASE("spatial dynamics mode rates are eigenvalues of the generator") {
  const auto d = instantiate("spatial_rd");
  const auto ev = real_parts(d.problem.generator);
  for (const auto& m : d.mode_rates) {
    auto near = [&](double v) {
      return std::any_of(ev.begin(), ev.end(), [v](double e) { return std::abs(e - v) < 1e-8; });
    };
    CHECK(near(m.rate_s));
    CHECK(near(m.rate_u));
  }
}

TEST_CASE("nonautonomous problem without driver is autonomous") {
  const auto d = instantiate("nonauto_scalar", {{"delta", 0.0}});
  CHECK(d.problem.base.kind == BaseDynamics::Kind::Point);
  CHECK(d.problem.rate_s() == doctest::Approx(-1.0));
  CHECK(d.problem.rate_u() == doctest::Approx(1.0));
  const auto w = instantiate("nonauto_scalar", {{"delta", 0.5}});
  CHECK(w.problem.base.kind == BaseDynamics::Kind::Driver);
  CHECK(w.problem.base.period == doctest::Approx(2 * kPi));
  CHECK(w.problem.rate_s() == doctest::Approx(-0.5));
}

TEST_CASE("Boussinesq truncation separates centre wave numbers") {
  const auto d = instantiate("boussinesq_trunc", {{"modes", 3}, {"alpha", 0.3}});
  REQUIRE(d.center_modes.size() == 1);
  CHECK(d.center_modes[0] == 1);
  CHECK_FALSE(d.mode_rates[0].hyperbolic);
  CHECK(d.mode_rates[1].rate_u == doctest::Approx(std::sqrt(0.3 * 16 - 4)));
  CHECK(d.problem.splitting.dim_x() == 8);
  CHECK(d.problem.splitting.dim_y() == 4);
  CHECK(kind_of([] { instantiate("boussinesq_trunc", {{"modes", 1}, {"alpha", 0.3}}); }) == ErrorKind::ParamOutOfRange);
}

TEST_CASE("every catalog splitting is invariant and certified") {
  for (const auto& id : problem_ids()) {
    CAPTURE(id);
    const auto d = instantiate(id);
    const auto& s = d.problem.splitting;
    const Mat& a = d.problem.generator;
    const Mat& p = s.projection_p;
    const Mat q = Mat::Identity(s.dim_total, s.dim_total) - p;
    CHECK(norm2(p * p - p) <= 1e-9);
    CHECK(norm2(q * a * p) <= 1e-8 * std::max(1.0, norm2(a)));
    CHECK(norm2(p * a * q) <= 1e-8 * std::max(1.0, norm2(a)));
    const auto cert = d.certificate();
    CHECK(cert.mu_s + cert.eps_s < cert.mu_u - cert.eps_u);
    CHECK(cert.alpha * cert.beta < 1.0);
    CHECK(cert.lambda_s * cert.lambda_u < 1.0);
    CHECK_FALSE(d.to_json().empty());
  }
}
