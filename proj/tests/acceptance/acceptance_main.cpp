// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <random>
#include <string>
#include <vector>

#include "dichotomy/ab_certificates.hpp"
#include "dichotomy/correspondence.hpp"
#include "dichotomy/dichotomous_solver.hpp"
#include "dichotomy/error.hpp"
#include "dichotomy/graph_transform.hpp"
#include "dichotomy/io.hpp"
#include "dichotomy/nhim.hpp"
#include "dichotomy/pipeline.hpp"
#include "dichotomy/problems.hpp"
#include "oracles.hpp"

using namespace dichotomy;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

Vec v1(double v) { return Vec::Constant(1, v); }

// Unstable manifold of the scalar saddle; shared by criteria 1 and 5.
struct SaddleGraph {
  ProblemDescriptor d;
  GraphCocycle dual;
  ABCertificate cert;
  GraphOptions opts;
  GraphFamily g;
  double seconds = 0.0;
};

SaddleGraph& saddle_graph() {
  static SaddleGraph s = [] {
    SaddleGraph r;
    const auto start = std::chrono::steady_clock::now();
    r.d = instantiate("scalar_saddle");
    SolverOptions so;
    so.steps_per_unit = 1000;
    so.tol = 1e-13;
    const auto p = r.d.problem;
    r.dual = dual_cocycle(autonomous_cocycle(1, 1, [p, so](double t) { return cocycle_correspondence(p, t, 0.0, so); }));
    r.cert = r.d.certificate().dual();
    r.opts.nodes_per_axis = 401;
    r.opts.radius = 0.5;
    r.opts.tol = 1e-10;
    r.opts.extra_residuals = false;
    r.g = invariant_graph(r.dual, {}, {r.cert}, r.opts);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
  }();
  return s;
}

Outcome criterion_1() {
  const auto& s = saddle_graph();
  const auto& sp = s.d.problem.splitting;
  double err = 0.0;
  for (int i = 0; i < s.g.grid.size(); ++i) {
    const double x = s.g.grid.node(i)(0) * sp.basis_y(0, 0);
    const double y = s.g.values[0](0, i) * sp.basis_x(1, 0);
    err = std::max(err, std::abs(y - x * x / 3.0));
  }
  return {err <= 1e-6 && s.seconds <= 10.0,
          fmt("saddle unstable manifold vs y = x^2/3: max error %.2e, %.2f s", err, s.seconds)};
}

Outcome criterion_2() {
  const auto d = instantiate("scalar_saddle");
  std::vector<double> res;
  for (int n : {100, 200, 400, 800}) {
    auto tr = solve_two_point(d.problem, v1(0.01), v1(0.2), 0.0, 3.0, n, 1e-14, 200);
    res.push_back(verify_mild_solution(tr, d.problem, 1e-14));
  }
  double worst = 1e300;
  for (std::size_t i = 1; i < res.size(); ++i) worst = std::min(worst, res[i - 1] / res[i]);
  return {worst >= 3.5, fmt("mild residual %.2e at n = 100, smallest halving factor %.3f", res[0], worst)};
}

Outcome criterion_3() {
  bool ok = true;
  std::string detail = "violations over 10^4 pairs:";
  const auto base = fs::temp_directory_path() / "dichotomy_acceptance_check";
  for (const auto& id : problem_ids()) {
    RunConfig c;
    c.problem_id = id;
    c.pipeline = {"check"};
    c.output_dir = (base / id).string();
    c.check.pairs = 10000;
    c.seed = 2024;
    const auto r = run_pipeline(c, RunOptions{true});
    const auto j = nlohmann::json::parse(io::read_text_file((base / id / "check.json").string()));
    const auto v = j["violations"].get<std::size_t>();
    ok = ok && v == 0 && r.failed_gates.empty();
    detail += " " + id + "=" + std::to_string(v);
  }
  return {ok, detail};
}

Outcome criterion_4() {
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = -1e300;
  std::size_t admissible = 0;
  for (int sys = 0; sys < 4; ++sys) {
    const double ms = -1.0 + 0.3 * u(rng), mu = 1.0 + 0.3 * u(rng);
    const double es = 0.2 + 0.1 * u(rng), eu = 0.2 + 0.1 * u(rng), ca = u(rng), cb = u(rng);
    EvolutionProblem p;
    p.generator = Mat::Zero(2, 2);
    p.generator(0, 0) = ms;
    p.generator(1, 1) = mu;
    p.splitting = block_splitting(p.generator, 1);
    p.nonlinearity = [=](double, const Vec& z, Vec& out) {
      out(0) = es * (0.5 * ca * z(0) + 0.5 * (ca >= 0 ? 1 : -1) * z(1));
      out(1) = eu * (0.5 * cb * z(1) + 0.5 * z(0));
    };
    p.eps = std::max(es, eu);
    p.eps_s = es;
    p.eps_u = eu;
    const auto cert = gap_certificate(ms, mu, es, eu);
    SolverOptions so;
    so.steps_per_unit = 400;
    so.tol = 1e-14;
    for (double t : {1.0, 1.5, 2.0, 3.0}) {
      const auto h = cocycle_correspondence(p, t, 0.0, so);
      const double bound = cert.k_alpha_at(t) * cert.alpha;
      for (int i = 0; i < 500; ++i) {
        // pairs differ by (x1, y2) since H is linear; aim at the cone boundary
        const Vec y2 = v1(u(rng));
        const double y1_guess = std::abs(h.eval_g(v1(0.0), y2)(0));
        const Vec x1 = v1(cert.alpha * y1_guess * 1.2 * u(rng));
        auto [x2, y1] = h.eval(x1, y2);
        if (std::abs(x1(0)) > cert.alpha * std::abs(y1(0)) || y2(0) == 0.0) continue;
        ++admissible;
        worst = std::max(worst, std::abs(x2(0)) / std::abs(y2(0)) - bound);
      }
    }
  }
  return {worst <= 1e-6 && admissible > 1000,
          fmt("sup |x2|/|y2| - k_alpha(t) alpha = %.2e over %.0f admissible pairs", worst, double(admissible))};
}

Outcome criterion_5() {
  auto& s = saddle_graph();
  double worst = 0.0;
  for (std::size_t k = 1; k < s.g.increments.size(); ++k)
    if (s.g.increments[k - 1] > 1e3 * s.opts.tol) worst = std::max(worst, s.g.increments[k] / s.g.increments[k - 1]);

  // a random Lipschitz start inside the cone
  std::mt19937_64 rng(55);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto start = GraphFamily::zeros({0.0}, 0.0, TensorGrid(1, s.opts.nodes_per_axis, s.opts.radius), 1);
  const double lip = 0.5 * s.cert.beta, h = start.grid.spacing();
  for (int i = start.grid.origin_index() + 1; i < start.grid.size(); ++i)
    start.values[0](0, i) = start.values[0](0, i - 1) + lip * h * u(rng);
  for (int i = start.grid.origin_index() - 1; i >= 0; --i)
    start.values[0](0, i) = start.values[0](0, i + 1) + lip * h * u(rng);
  auto opts = s.opts;
  opts.initial = &start;
  const auto other = invariant_graph(s.dual, {}, {s.cert}, opts);
  const double dist = s.g.sup_distance(other);
  return {worst <= s.g.theta + 0.05 && dist <= 2 * s.opts.tol,
          fmt("increment ratio %.3f vs theta %.3f; initializations differ by %.2e", worst, s.g.theta, dist)};
}

Outcome criterion_6() {
  const auto d = instantiate("scalar_saddle", {{"radius", 0.01}});
  const auto cert = d.certificate();
  SolverOptions so;
  Vec z0(2);
  z0 << 0.0, 0.005;
  const auto orb = forward_orbit(d.problem, z0, 0.0, 0.5, 41, so);
  const auto fib = strong_stable_fiber(orbit_deviation_cocycle(d.problem, orb, so), orb, 0.01, cert, 1e-12, 21, 10, 10);
  const std::vector<double> ts(fib.times.begin(), fib.times.begin() + fib.horizon_samples);
  const double rate = fit_decay_rate(ts, fib.separations(v1(0.005)));
  const double rel = std::abs(rate / cert.lambda_s - 1.0);
  return {rel <= 0.05 && ts.back() >= 10.0 - 1e-9,
          fmt("fibre decay rate %.5f vs lambda_s %.5f (relative %.4f)", rate, cert.lambda_s, rel)};
}

Outcome criterion_7() {
  NhimParams p;
  p.nodes = 11;
  std::vector<double> etas = {1e-3, 3e-3, 1e-2}, amps;
  double err = 0.0;
  for (double eta : etas) {
    const auto g = trichotomy_persist(trichotomy_circle(eta, 64), p);
    double amp = 0.0;
    for (std::size_t i = 0; i < g.theta.size(); ++i) {
      amp = std::max(amp, std::abs(g.sigma_c[i](1)));
      if (eta == 1e-2) {
        const double th = g.theta[i];
        err = std::max(err, std::abs(g.sigma_c[i](1) - eta * (std::sin(th) - 4 * std::cos(th)) / 17.0) +
                                std::abs(g.sigma_c[i](0)));
      }
    }
    amps.push_back(amp);
  }
  std::vector<double> le;
  for (double e : etas) le.push_back(std::log(e));
  const double slope = oracle::log_slope(le, amps);
  return {err <= 5e-4 && std::abs(slope - 1.0) <= 0.1,
          fmt("Sigma_c error %.2e at eta = 1e-2; amplitude slope in eta %.4f", err, slope)};
}

Outcome criterion_8() {
  const auto m = trichotomy_circle(1e-2, 64);
  NhimParams p;
  p.nodes = 11;
  const auto g = trichotomy_persist(m, p);
  const auto r = tracking_check(m, g, cs_orbit(m, g.cs, 0.3, v1(0.05), 20));
  const double rel = std::abs(r.fitted_rate / std::exp(-2.0) - 1.0);
  return {rel <= 0.05, fmt("tracking rate %.6f vs e^-2 = %.6f (relative %.2e)", r.fitted_rate, std::exp(-2.0), rel)};
}

Outcome criterion_9() {
  std::mt19937_64 rng(909);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t violations = 0, instances = 0;
  for (int i = 0; i < 200; ++i) {
    const auto m = oracle::random_mode_system(rng, i % 2 == 0);
    MRProfile prof{[m](double t) { return m.delta(t); }, m.mu, 0.05 + 0.45 * u(rng), 0.5};
    const auto k = keylem_constants(prof);
    const double a = 0.5 + u(rng);
    const auto run = oracle::simulate_key_lemma(m, a, prof.beta, 3.0, 1e-3, rng);
    ++instances;
    for (std::size_t j = 0; j < run.times.size(); ++j)
      if (run.y_norm[j] > k.k * a * std::exp((m.mu + k.lambda) * run.times[j]) * (1 + 1e-12)) {
        ++violations;
        break;
      }
  }
  std::size_t dominated = 0;
  for (int i = 0; i < 200; ++i) {
    const auto m = oracle::random_mode_system(rng, false);
    const double b = 0.1 + 2.0 * u(rng), mu_hat = -1.0 + 2.0 * u(rng), eps1 = 0.1 + 0.9 * u(rng);
    const int n = 1 + static_cast<int>(10 * u(rng));
    const double bound = prelem_bound(b, mu_hat, m.mu, m.delta(eps1), eps1, n);
    const double rec = oracle::prelem_recursion(b, mu_hat, m.mu, m.delta(eps1), eps1, n);
    const double sim = oracle::prelem_simulation(m, b, mu_hat, eps1, n, rng);
    if (bound >= rec * (1 - 1e-12) && bound >= sim * (1 - 1e-12)) ++dominated;
  }
  return {violations == 0 && instances == 200 && dominated == 200,
          fmt("key lemma violations %.0f of 200; bound dominates recursion and simulation on %.0f of 200",
              double(violations), double(dominated))};
}

Outcome criterion_10() {
  const auto d = instantiate("scalar_saddle");
  const auto h = d.correspondence(1.0);
  const auto k = d.certificate().constants_at(1.0);
  const ABConstants kd{k.beta, k.beta_prime, k.alpha, k.alpha_prime, k.lambda_u, k.lambda_s};
  BallPairSampler sa(1, 1, 0.5, 0.5, 10), sb(1, 1, 0.5, 0.5, 10);
  CheckOptions opts;
  opts.keep_pairs = true;
  const auto r = empirical_ab_check(h, k, [&] { return sa.next(); }, 1000, opts);
  const auto rd = empirical_ab_check(
      dual(h), kd,
      [&]() -> std::optional<InputPair> {
        auto p = sb.next();
        if (!p) return std::nullopt;
        return transport_to_dual(*p);
      },
      1000, opts);
  std::size_t mismatches = 0, premises = 0;
  for (std::size_t i = 0; i < 1000; ++i)
    for (int c = 0; c < 2; ++c) {
      const auto& a = r.pairs[i];
      const auto& b = rd.pairs[i];
      premises += a.premise[c];
      if (a.premise[c] != b.premise[c + 2] || a.margin[c] != b.margin[c + 2]) ++mismatches;
    }
  return {mismatches == 0 && premises > 0,
          fmt("(A) of H vs (B) of dual(H): %.0f mismatches over 1000 pairs, %.0f premises", double(mismatches),
              double(premises))};
}

Outcome criterion_11() {
  const auto base = fs::temp_directory_path() / "dichotomy_acceptance_repro";
  bool same = true;
  std::size_t files = 0;
  for (const auto& [id, stages] : std::vector<std::pair<std::string, std::vector<std::string>>>{
           {"scalar_saddle", {"certify", "solve-bvp", "manifold", "check"}}, {"nhim_circle", {"certify", "nhim"}}}) {
    std::vector<RunResult> runs;
    for (const char* tag : {"a", "b"}) {
      RunConfig c;
      c.problem_id = id;
      c.pipeline = stages;
      c.seed = 77;
      c.check.pairs = 2000;
      c.output_dir = (base / (id + "_" + tag)).string();
      fs::remove_all(c.output_dir);
      runs.push_back(run_pipeline(c));
    }
    same = same && runs[0].manifest_json() == runs[1].manifest_json() && !runs[0].manifest.empty();
    for (const auto& e : runs[0].manifest) {
      ++files;
      same = same && io::read_text_file((base / (id + "_a") / e.file).string()) ==
                         io::read_text_file((base / (id + "_b") / e.file).string());
    }
  }
  return {same, fmt("%.0f artifacts compared byte for byte across two runs", double(files))};
}

}  // namespace

int main() {
  const std::vector<std::function<Outcome()>> criteria = {criterion_1, criterion_2, criterion_3, criterion_4,
                                                          criterion_5, criterion_6, criterion_7, criterion_8,
                                                          criterion_9, criterion_10, criterion_11};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      o = criteria[i]();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s criterion %zu: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", i + 1, o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed ? 1 : 0;
}
