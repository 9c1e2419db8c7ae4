#include <doctest.h>

#include <cmath>
#include <random>

#include "dichotomy/ab_certificates.hpp"
#include "dichotomy/correspondence.hpp"
#include "dichotomy/error.hpp"
#include "dichotomy/problems.hpp"

using namespace dichotomy;

namespace {

Mat s1(double v) { return Mat::Constant(1, 1, v); }
Vec v1(double v) { return Vec::Constant(1, v); }

std::vector<std::pair<Vec, Vec>> random_inputs(int dx, int dy, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<std::pair<Vec, Vec>> out;
  for (int i = 0; i < n; ++i) {
    Vec x(dx), y(dy);
    for (int k = 0; k < dx; ++k) x(k) = u(rng);
    for (int k = 0; k < dy; ++k) y(k) = u(rng);
    out.emplace_back(x, y);
  }
  return out;
}

bool same(const Vec& a, const Vec& b) { return a.size() == b.size() && (a - b).cwiseAbs().maxCoeff() == 0.0; }

GeneratingCorrespondence nonlinear_map() {
  return GeneratingCorrespondence::from_maps(
      {1, 1, 1, 1}, [](const Vec& x, const Vec& y) { return Vec(0.3 * x + 0.1 * y.array().sin().matrix()); },
      [](const Vec& x, const Vec& y) { return Vec(0.4 * y + 0.05 * x.array().square().matrix()); });
}

}  // namespace

TEST_CASE("generating maps evaluate deterministically") {
  const auto h = nonlinear_map();
  for (const auto& [x, y] : random_inputs(1, 1, 50, 3)) {
    const auto a = h.graph_point(x, y);
    const auto b = h.graph_point(a.x1, a.y2);
    CHECK(same(a.x2, b.x2));
    CHECK(same(a.y1, b.y1));
  }
}

TEST_CASE("composition of identities is the identity") {
  const auto id = identity_correspondence(2, 1);
  const auto out = compose_on_samples(id, id, random_inputs(2, 1, 30, 1));
  REQUIRE(out.size() == 30);
  for (const auto& s : out) {
    CHECK((s.x3 - s.x1).norm() < 1e-15);
    CHECK((s.y1 - s.y3).norm() < 1e-15);
    CHECK(s.residual <= 1e-9);
  }
}

TEST_CASE("composition of linear correspondences multiplies rates") {
  const double l1 = 0.5, m1 = 0.25, l2 = 0.8, m2 = 0.6;
  const auto h1 = linear_correspondence(s1(l1), s1(0), s1(0), s1(m1));
  const auto h2 = linear_correspondence(s1(l2), s1(0), s1(0), s1(m2));
  for (const auto& s : compose_on_samples(h2, h1, random_inputs(1, 1, 40, 2))) {
    CHECK(s.x3(0) == doctest::Approx(l2 * l1 * s.x1(0)).epsilon(1e-13));
    CHECK(s.y1(0) == doctest::Approx(m1 * m2 * s.y3(0)).epsilon(1e-13));
  }
}

TEST_CASE("composition checks dimensions") {
  const auto a = identity_correspondence(1, 1);
  const auto b = identity_correspondence(2, 1);
  try {
    compose(b, a);
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DimensionMismatch);
  }
}

TEST_CASE("composition is associative on samples") {
  const auto h1 = nonlinear_map();
  const auto h2 = linear_correspondence(s1(0.7), s1(0.2), s1(-0.1), s1(0.5));
  const auto h3 = nonlinear_map();
  const auto left = compose(compose(h3, h2), h1);
  const auto right = compose(h3, compose(h2, h1));
  for (const auto& [x, y] : random_inputs(1, 1, 40, 9)) {
    auto [fl, gl] = left.eval(x, y);
    auto [fr, gr] = right.eval(x, y);
    CHECK((fl - fr).norm() <= 1e-9);
    CHECK((gl - gr).norm() <= 1e-9);
  }
}

TEST_CASE("inversion swaps graph coordinates and is an involution") {
  const auto h = nonlinear_map();
  const auto inv = invert(h);
  const auto inv2 = invert(inv);
  for (const auto& [x, y] : random_inputs(1, 1, 50, 4)) {
    const auto p = h.graph_point(x, y);
    const auto q = inv.graph_point(p.y2, p.x1);
    CHECK(same(q.x1, p.y2));
    CHECK(same(q.y2, p.x1));
    CHECK(same(q.y1, p.x2));
    CHECK(same(q.x2, p.y1));
    const auto r = inv2.graph_point(x, y);
    CHECK(same(r.x2, p.x2));
    CHECK(same(r.y1, p.y1));
  }
  const auto id = invert(identity_correspondence(1, 1));
  for (const auto& [x, y] : random_inputs(1, 1, 10, 5)) {
    CHECK(same(id.eval_f(x, y), x));
    CHECK(same(id.eval_g(x, y), y));
  }
  const auto lin = invert(linear_correspondence(s1(0.5), s1(0), s1(0), s1(0.3)));
  for (const auto& [a, b] : random_inputs(1, 1, 10, 6)) {
    CHECK(lin.eval_f(a, b)(0) == 0.3 * a(0));
    CHECK(lin.eval_g(a, b)(0) == 0.5 * b(0));
  }
}

TEST_CASE("dual swaps argument and output slots") {
  const double lam = 0.5, a = 0.2, mu = 0.3;
  const auto h = linear_correspondence(s1(lam), s1(a), s1(0), s1(mu));
  const auto d = dual(h);
  for (const auto& [x, y] : random_inputs(1, 1, 30, 7)) {
    CHECK(d.eval_f(x, y)(0) == doctest::Approx(mu * x(0)));
    CHECK(d.eval_g(x, y)(0) == doctest::Approx(lam * y(0) + a * x(0)));
  }
  const auto g = nonlinear_map();
  const auto gd = dual(g);
  const auto gdd = dual(gd);
  for (const auto& [x, y] : random_inputs(1, 1, 30, 8)) {
    CHECK(same(gd.eval_f(x, y), g.eval_g(y, x)));
    CHECK(same(gd.eval_g(x, y), g.eval_f(y, x)));
    CHECK(same(gdd.eval_f(x, y), g.eval_f(x, y)));
    CHECK(same(gdd.eval_g(x, y), g.eval_g(x, y)));
  }
  const auto id = dual(identity_correspondence(1, 1));
  CHECK(same(id.eval_f(v1(0.3), v1(-0.2)), v1(0.3)));
}

TEST_CASE("tabled Lipschitz constants bound finite differences") {
  LipTable lip{0.1, 0.3, 0.4, 0.1};
  const auto h = GeneratingCorrespondence::from_maps(
      {1, 1, 1, 1}, [](const Vec& x, const Vec& y) { return Vec(0.3 * x + 0.1 * y.array().sin().matrix()); },
      [](const Vec& x, const Vec& y) { return Vec(0.4 * y + 0.1 * x.array().sin().matrix()); }, lip);
  const auto est = estimate_lip_table(h, random_inputs(1, 1, 1000, 12));
  CHECK(est.f_in_y <= lip.f_in_y * 1.05);
  CHECK(est.f_in_x <= lip.f_in_x * 1.05);
  CHECK(est.g_in_y <= lip.g_in_y * 1.05);
  CHECK(est.g_in_x <= lip.g_in_x * 1.05);
}

TEST_CASE("linear decoupled correspondence has no (A)(B) violations") {
  const double ls = 0.4, lu = 0.3;
  const auto h = linear_correspondence(s1(ls), s1(0), s1(0), s1(lu));
  ABConstants k{0.5, 0.5, 0.5, 0.5, ls, lu};
  BallPairSampler s(1, 1, 1.0, 1.0, 21);
  const auto r = empirical_ab_check(h, k, [&] { return s.next(); }, 5000);
  CHECK(r.total_violations() == 0);
  CHECK(r.at(ABCondition::A1).premises > 0);
  CHECK(r.at(ABCondition::B1).premises > 0);
  CHECK(r.seed == 0);
}

TEST_CASE("saddle correspondence satisfies its certificate and fails a falsified one") {
  const auto d = instantiate("scalar_saddle");
  const auto cert = d.certificate();
  const auto h = d.correspondence(1.0);
  const auto k = cert.constants_at(1.0);
  {
    ConePairSampler s(1, 1, 0.5, 0.5, 2.0 * std::max(k.alpha * k.lambda_u, k.beta * k.lambda_s), 3);
    const auto r = empirical_ab_check(h, k, [&] { return s.next(); }, 2000);
    CHECK(r.total_violations() == 0);
  }
  {
    auto bad = k;
    bad.lambda_u *= 0.5;
    BallPairSampler s(1, 1, 0.5, 0.5, 3);
    const auto r = empirical_ab_check(h, bad, [&] { return s.next(); }, 2000);
    CHECK(r.at(ABCondition::A2).count > 0);
    CHECK(r.at(ABCondition::A2).worst_margin > 0);
  }
}

TEST_CASE("(A) outcomes of H equal (B) outcomes of its dual pair for pair") {
  const auto h = nonlinear_map();
  ABConstants k{0.6, 0.45, 0.5, 0.3, 0.5, 0.5};
  ABConstants kd{k.beta, k.beta_prime, k.alpha, k.alpha_prime, k.lambda_u, k.lambda_s};
  BallPairSampler s1s(1, 1, 1.0, 1.0, 17), s2s(1, 1, 1.0, 1.0, 17);
  CheckOptions opts;
  opts.keep_pairs = true;
  const auto r = empirical_ab_check(h, k, [&] { return s1s.next(); }, 1000, opts);
  const auto rd = empirical_ab_check(
      dual(h), kd,
      [&]() -> std::optional<InputPair> {
        auto p = s2s.next();
        if (!p) return std::nullopt;
        return transport_to_dual(*p);
      },
      1000, opts);
  for (std::size_t i = 0; i < 1000; ++i) {
    CHECK(r.pairs[i].premise[0] == rd.pairs[i].premise[2]);
    CHECK(r.pairs[i].margin[0] == rd.pairs[i].margin[2]);
    CHECK(r.pairs[i].margin[1] == rd.pairs[i].margin[3]);
    CHECK(r.pairs[i].premise[2] == rd.pairs[i].premise[0]);
    CHECK(r.pairs[i].margin[2] == rd.pairs[i].margin[0]);
    CHECK(r.pairs[i].margin[3] == rd.pairs[i].margin[1]);
  }
}

TEST_CASE("exhausted sampler is reported") {
  const auto h = identity_correspondence(1, 1);
  BallPairSampler s(1, 1, 1.0, 1.0, 1, 10);
  try {
    empirical_ab_check(h, ABConstants{0.5, 0.5, 0.5, 0.5, 1, 1}, [&] { return s.next(); }, 20);
    FAIL("expected SamplerExhausted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SamplerExhausted);
  }
}

TEST_CASE("samplers are reproducible from the seed") {
  BallPairSampler a(2, 1, 1.0, 0.5, 99), b(2, 1, 1.0, 0.5, 99);
  for (int i = 0; i < 20; ++i) {
    auto p = a.next(), q = b.next();
    CHECK(same(p->x1, q->x1));
    CHECK(same(p->y2p, q->y2p));
    CHECK(p->x1.norm() <= 1.0);
    CHECK(p->y2.norm() <= 0.5);
  }
}
