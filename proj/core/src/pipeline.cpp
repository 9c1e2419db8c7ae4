#include "dichotomy/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <set>

#include "dichotomy/error.hpp"
#include "dichotomy/graph_transform.hpp"
#include "dichotomy/io.hpp"
#include "json_util.hpp"

namespace dichotomy {

namespace {

using detail::json;

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorKind::ConfigInvalid, where + " must be an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw Error(ErrorKind::ConfigInvalid, "unknown key '" + k + "' in " + where);
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigInvalid, where + "." + key + ": " + e.what());
  }
}

std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

Vec from_std(const std::vector<double>& v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

/// Thrown inside a stage when a certified hypothesis fails.
struct GateFailure {
  std::string name;
  std::string detail;
};

bool is_gate_error(ErrorKind k) {
  return k == ErrorKind::HypothesisFailure || k == ErrorKind::GapViolated || k == ErrorKind::AlphaBelowThreshold;
}

struct Context {
  const RunConfig& cfg;
  const RunOptions& opts;
  std::filesystem::path dir;
  ProblemDescriptor desc;
  RunResult result;
  std::string stage;
  std::optional<CenterStableResult> cs;

  SolverOptions solver(double spu = 0.0) const {
    SolverOptions so;
    so.steps_per_unit = spu > 0 ? spu : cfg.steps_per_unit;
    so.tol = cfg.picard_tol;
    so.max_iter = cfg.max_iter;
    return so;
  }

  NhimParams nhim_params() const {
    NhimParams p;
    p.sigma = cfg.nhim.sigma;
    p.rho = cfg.nhim.rho;
    p.nodes = cfg.nhim.nodes;
    p.tol = cfg.graph_tol;
    p.solver = solver();
    p.gates = cfg.gates;
    p.enforce_gates = !opts.allow_failed_gates;
    p.threads = cfg.threads;
    return p;
  }

  void emit(const std::string& name, const std::string& content) {
    io::write_text_file(dir / name, content);
    result.manifest.push_back({name, io::sha256_hex(content), stage});
  }

  void gate(const std::string& name, bool pass, const std::string& detail) {
    if (pass) return;
    result.failed_gates.push_back(stage + ":" + name);
    if (!opts.allow_failed_gates) throw GateFailure{name, detail};
  }

  const CenterStableResult& center_stable() {
    if (!cs) cs = center_stable_persist(*desc.nhim, nhim_params());
    return *cs;
  }
};

json gates_to_json(const std::vector<GateEntry>& gates) {
  json a = json::array();
  for (const auto& g : gates) a.push_back({{"name", g.name}, {"value", g.value}, {"threshold", g.threshold}, {"pass", g.pass}});
  return a;
}

void stage_certify(Context& c) {
  json j;
  j["problem"] = json::parse(c.desc.to_json());
  try {
    const auto cert = c.desc.certificate();
    j["certificate"] = json::parse(cert.to_json());
    if (c.desc.nhim) {
      j["bundle_center_stable"] = json::parse(bundle_certificate(*c.desc.nhim, BundleKind::CenterStable).to_json());
      j["bundle_stable"] = json::parse(bundle_certificate(*c.desc.nhim, BundleKind::Stable).to_json());
    }
    j["status"] = "certified";
    c.emit("certificate.json", j.dump(2));
  } catch (const Error& e) {
    if (!is_gate_error(e.kind())) throw;
    j["status"] = std::string(to_string(e.kind()));
    j["detail"] = e.what();
    if (e.value()) j["value"] = *e.value();
    c.emit("certificate.json", j.dump(2));
    c.gate(std::string(to_string(e.kind())), false, e.what());
  }
}

void stage_solve_bvp(Context& c) {
  const auto& p = c.desc.problem;
  const int dx = p.splitting.dim_x(), dy = p.splitting.dim_y();
  const double r = 0.25 * c.desc.check_radius;
  Vec x1 = c.cfg.bvp.x1.empty() ? Vec(Vec::Constant(dx, r / std::sqrt(std::max(1, dx)))) : from_std(c.cfg.bvp.x1);
  Vec y2 = c.cfg.bvp.y2.empty() ? Vec(Vec::Constant(dy, r / std::sqrt(std::max(1, dy)))) : from_std(c.cfg.bvp.y2);
  if (x1.size() != dx || y2.size() != dy)
    throw Error(ErrorKind::BoundaryDimensionMismatch, "bvp.x1/bvp.y2 do not match the splitting");
  const auto so = c.solver();
  const int n = c.cfg.bvp.grid_n > 0 ? c.cfg.bvp.grid_n : so.steps_for(c.cfg.bvp.t);
  auto traj = solve_two_point(p, x1, y2, 0.0, c.cfg.bvp.t, n, c.cfg.picard_tol, c.cfg.max_iter);
  verify_mild_solution(traj, p, c.cfg.picard_tol);
  c.emit("bvp_trajectory.csv", traj.to_csv());
  c.emit("bvp_report.json", traj.report_json());
}

GraphCocycle base_cocycle(const Context& c, const SolverOptions& so) {
  const auto& p = c.desc.problem;
  const int dx = p.splitting.dim_x(), dy = p.splitting.dim_y();
  if (p.base.kind == BaseDynamics::Kind::Point || !p.base.driver) {
    return autonomous_cocycle(dx, dy, [p, so](double t) { return cocycle_correspondence(p, t, 0.0, so); });
  }
  if (!(p.base.period > 0))
    throw Error(ErrorKind::ParamOutOfRange, "graphs over a driver need a periodic driver");
  GraphCocycle cc;
  cc.dim_x = dx;
  cc.dim_y = dy;
  const int n = c.cfg.manifold.base_samples;
  const double period = p.base.period;
  cc.samples.clear();
  for (int i = 0; i < n; ++i) cc.samples.push_back(period * i / n);
  cc.period = period;
  cc.base_step = period / n;
  cc.at = [p, so](double t, double w) { return cocycle_correspondence(p, t, w, so); };
  cc.base_flow = [period](double w, double t) {
    double r = std::fmod(w + t, period);
    return r < 0 ? r + period : r;
  };
  return cc;
}

SectionSpec section_for(const EvolutionProblem& p) {
  SectionSpec s;
  if (!p.nonlinearity) return s;
  Vec out(p.dim());
  const Vec zero = Vec::Zero(p.dim());
  for (double t : {0.0, 0.7, 1.9, 3.1}) {
    out.setZero();
    p.nonlinearity(t, zero, out);
    if (out.cwiseAbs().maxCoeff() > 0.0) {
      s.mode = SectionMode::YBounded;
      s.eps1_fn = [](double) { return 1.0; };
      break;
    }
  }
  return s;
}

void stage_manifold(Context& c) {
  json meta;
  if (c.desc.nhim) {
    const auto& cs = c.center_stable();
    meta["graph"] = json::parse(cs.h_cs.to_json_meta());
    meta["gates"] = gates_to_json(cs.gates);
    c.emit("manifold.csv", cs.h_cs.to_csv());
    c.emit("manifold.json", meta.dump(2));
    return;
  }
  const auto& p = c.desc.problem;
  const auto& m = c.cfg.manifold;
  const bool unstable = m.branch == "unstable";
  const int dim = unstable ? p.splitting.dim_y() : p.splitting.dim_x();
  if (dim < 1 || dim > 3)
    throw Error(ErrorKind::ParamOutOfRange, "graph domains must have dimension 1..3", dim);
  const auto so = c.solver(m.steps_per_unit);
  const GraphCocycle cc = base_cocycle(c, so);
  const auto cert = c.desc.certificate();
  GraphOptions go;
  go.nodes_per_axis = m.nodes > 0 ? m.nodes : (dim == 1 ? 401 : dim == 2 ? 41 : 15);
  go.radius = m.radius;
  go.tol = c.cfg.graph_tol;
  go.threads = c.cfg.threads;
  const SectionSpec section = section_for(p);
  GraphFamily g;
  if (unstable) {
    const std::vector<ABCertificate> k(cc.samples.size(), cert.dual());
    g = invariant_graph(dual_cocycle(cc), section, k, go);
  } else {
    const std::vector<ABCertificate> k(cc.samples.size(), cert);
    g = local_stable_graph(cc, m.radius, k, go, section);
  }
  meta["branch"] = m.branch;
  meta["graph"] = json::parse(g.to_json_meta());
  if (go.nodes_per_axis >= 5) meta["smoothness"] = json::parse(smoothness_probe(g, ProbeOrder::First).to_json());
  const auto& o = c.desc.oracle;
  if (o.kind == ProblemOracle::Kind::PlanarGraphs && p.dim() == 2) {
    double err = 0.0;
    for (int i = 0; i < g.grid.size(); ++i) {
      const Vec u = g.grid.node(i);
      const Vec v = g.values[0].col(i);
      const Vec z = unstable ? p.splitting.assemble(v, u) : p.splitting.assemble(u, v);
      if (unstable && std::abs(z(0)) <= o.domain + 1e-12) err = std::max(err, std::abs(z(1) - o.unstable_graph(z(0))));
      if (!unstable) err = std::max(err, std::abs(z(0) - o.stable_graph(z(1))));
    }
    meta["oracle"] = o.formula;
    meta["oracle_max_error"] = err;
  }
  c.emit("manifold.csv", g.to_csv());
  c.emit("manifold.json", meta.dump(2));
}

void stage_foliation(Context& c) {
  const auto& f = c.cfg.foliation;
  json j;
  if (c.desc.nhim) {
    const auto& model = *c.desc.nhim;
    const auto& cs = c.center_stable();
    const double th = c.cfg.nhim.theta0;
    Vec s = Vec::Constant(model.ds, c.cfg.nhim.s0);
    Vec w0(model.ds + model.du);
    w0 << s, cs.h_cs.eval_at(th, s);
    const auto leaf = strong_foliation_leaf(model, cs, th, w0, f.sigma0, c.nhim_params(), f.horizon);
    std::vector<std::vector<double>> rows;
    for (const auto& q : leaf.ambient_points(model)) rows.push_back(to_std(q));
    c.emit("leaf.csv", io::csv_table({"x", "y", "z"}, rows));
    j["theta0"] = th;
    j["w0"] = to_std(w0);
    j["fitted_rate"] = leaf.fitted_rate;
    j["lipschitz"] = leaf.lipschitz;
    j["tangent"] = to_std(leaf.tangent);
    c.emit("foliation.json", j.dump(2));
    return;
  }
  const auto& p = c.desc.problem;
  const auto so = c.solver();
  Vec z0;
  if (f.z0.empty()) {
    Vec x = Vec::Zero(p.splitting.dim_x());
    if (x.size()) x(0) = 0.5 * f.sigma0;
    z0 = p.splitting.assemble(x, Vec::Zero(p.splitting.dim_y()));
  } else {
    z0 = from_std(f.z0);
  }
  const int samples = static_cast<int>(std::ceil(2 * f.horizon / f.step - 1e-9)) + 1;
  const auto orbit = forward_orbit(p, z0, 0.0, f.step, samples, so);
  const auto cc = orbit_deviation_cocycle(p, orbit, so);
  const auto cert = c.desc.certificate();
  const auto fib = strong_stable_fiber(cc, orbit, f.sigma0, cert, c.cfg.graph_tol, f.nodes, f.horizon, f.horizon);
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < fib.grid.size(); ++i) {
    auto row = to_std(fib.grid.node(i));
    for (int k = 0; k < fib.dim_y; ++k) row.push_back(fib.graphs[0](k, i));
    rows.push_back(row);
  }
  std::vector<std::string> header;
  for (int k = 0; k < fib.grid.dim; ++k) header.push_back("x" + std::to_string(k));
  for (int k = 0; k < fib.dim_y; ++k) header.push_back("y" + std::to_string(k));
  c.emit("fiber.csv", io::csv_table(header, rows));
  const std::vector<double> times(fib.times.begin(), fib.times.begin() + fib.horizon_samples);
  const double rate = fit_decay_rate(times, fib.separations(Vec::Constant(fib.grid.dim, 0.5 * f.sigma0)));
  j["z0"] = to_std(z0);
  j["fitted_rate"] = rate;
  j["lambda_s"] = cert.lambda_s;
  j["relative_deviation"] = std::abs(rate / cert.lambda_s - 1.0);
  c.emit("foliation.json", j.dump(2));
}

void stage_nhim(Context& c) {
  if (!c.desc.nhim) throw Error(ErrorKind::ParamOutOfRange, "the nhim stage needs a circle problem");
  const auto& model = *c.desc.nhim;
  const auto params = c.nhim_params();
  const auto g = trichotomy_persist(model, params);
  c.cs = g.cs;
  {
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < model.base.samples.size(); ++i) {
      auto row = std::vector<double>{model.base.params[i]};
      for (double v : to_std(model.base.samples[i])) row.push_back(v);
      rows.push_back(row);
    }
    c.emit("nhim_base.csv", io::csv_table({"theta", "x", "y", "z"}, rows));
  }
  c.emit("nhim_hcs.csv", g.cs.h_cs.to_csv());
  c.emit("nhim_hcu.csv", g.h_cu.to_csv());
  c.emit("nhim_sigma_c.csv", g.to_csv());
  const auto orbit = cs_orbit(model, g.cs, c.cfg.nhim.theta0, Vec::Constant(model.ds, c.cfg.nhim.s0),
                              c.cfg.nhim.tracking_steps);
  const auto track = tracking_check(model, g, orbit);
  c.emit("nhim_tracking.json", track.to_json());
  json j;
  j["center_stable"] = json::parse(g.cs.to_json());
  j["center_unstable"] = json::parse(g.h_cu.to_json_meta());
  j["mu_cs"] = g.mu_cs;
  j["mu_cu"] = g.mu_cu;
  j["mu_c"] = g.mu_c;
  json res = json::array();
  for (const auto& [t, r] : g.sigma_c_residual) res.push_back({{"t", t}, {"residual", r}});
  j["sigma_c_residual"] = res;
  if (c.desc.oracle.kind == ProblemOracle::Kind::PerturbedCircle) {
    double err = 0.0;
    for (std::size_t i = 0; i < g.theta.size(); ++i) {
      const Vec& w = g.sigma_c[i];
      err = std::max({err, w.head(model.ds).cwiseAbs().maxCoeff(),
                      std::abs(w(model.ds) - c.desc.oracle.circle_height(g.theta[i]))});
    }
    j["oracle"] = c.desc.oracle.formula;
    j["oracle_max_error"] = err;
  }
  c.emit("nhim_report.json", j.dump(2));
  for (const auto& e : g.cs.gates) c.gate(e.name, e.pass, "smallness gate");
}

void stage_check(Context& c) {
  const double t = c.cfg.check.time > 0 ? c.cfg.check.time : c.desc.check_time;
  const double r = c.cfg.check.radius > 0 ? c.cfg.check.radius : c.desc.check_radius;
  const auto cert = c.desc.certificate();
  const auto k = cert.constants_at(t);
  const auto h = c.desc.correspondence(t, 0.0, c.solver());
  ConePairSampler sampler(h.dims().x1, h.dims().y2, r, r, 2.0 * std::max(k.alpha * k.lambda_u, k.beta * k.lambda_s),
                          c.cfg.seed);
  CheckOptions co;
  co.threads = c.cfg.threads;
  co.seed = c.cfg.seed;
  const auto rep = empirical_ab_check(h, k, [&] { return sampler.next(); }, c.cfg.check.pairs, co);
  json j;
  j["time"] = t;
  j["radius"] = r;
  j["violations"] = rep.total_violations();
  j["report"] = json::parse(rep.to_json());
  c.emit("check.json", j.dump(2));
  c.gate("ab_check", rep.total_violations() == 0, "(A)(B) violations");
}

}  // namespace

const std::vector<std::string>& known_stages() {
  static const std::vector<std::string> s = {"certify", "solve-bvp", "manifold", "foliation", "nhim", "check"};
  return s;
}

std::string RunConfig::to_json() const {
  json j;
  j["schema"] = schema;
  j["problem"] = {{"id", problem_id}, {"params", problem_params}};
  j["pipeline"] = pipeline;
  j["tolerances"] = {{"picard_tol", picard_tol},
                     {"graph_tol", graph_tol},
                     {"gates", {{"xi", gates.xi}, {"xi1", gates.xi1}, {"xi2", gates.xi2}, {"eta", gates.eta}, {"chi", gates.chi}}}};
  j["seed"] = seed;
  j["output_dir"] = output_dir;
  j["threads"] = threads;
  j["solver"] = {{"steps_per_unit", steps_per_unit}, {"max_iter", max_iter}};
  j["bvp"] = {{"t", bvp.t}, {"grid_n", bvp.grid_n}, {"x1", bvp.x1}, {"y2", bvp.y2}};
  j["manifold"] = {{"branch", manifold.branch},
                   {"nodes", manifold.nodes},
                   {"radius", manifold.radius},
                   {"steps_per_unit", manifold.steps_per_unit},
                   {"base_samples", manifold.base_samples}};
  j["foliation"] = {{"sigma0", foliation.sigma0},
                    {"horizon", foliation.horizon},
                    {"step", foliation.step},
                    {"nodes", foliation.nodes},
                    {"z0", foliation.z0}};
  j["nhim"] = {{"nodes", nhim.nodes},       {"sigma", nhim.sigma}, {"rho", nhim.rho},
               {"theta0", nhim.theta0},     {"s0", nhim.s0},       {"tracking_steps", nhim.tracking_steps}};
  j["check"] = {{"pairs", check.pairs}, {"time", check.time}, {"radius", check.radius}};
  return j.dump(2);
}

RunConfig RunConfig::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigInvalid, std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown(j, {"schema", "problem", "pipeline", "tolerances", "seed", "output_dir", "threads", "solver", "bvp",
                     "manifold", "foliation", "nhim", "check"},
                 "config");
  RunConfig c;
  read(j, "schema", c.schema, "config");
  if (c.schema != 1) throw Error(ErrorKind::ConfigInvalid, "unsupported schema version", c.schema);
  if (j.contains("problem")) {
    const auto& p = j["problem"];
    reject_unknown(p, {"id", "params"}, "problem");
    read(p, "id", c.problem_id, "problem");
    read(p, "params", c.problem_params, "problem");
  }
  read(j, "pipeline", c.pipeline, "config");
  if (j.contains("tolerances")) {
    const auto& t = j["tolerances"];
    reject_unknown(t, {"picard_tol", "graph_tol", "gates"}, "tolerances");
    read(t, "picard_tol", c.picard_tol, "tolerances");
    read(t, "graph_tol", c.graph_tol, "tolerances");
    if (t.contains("gates")) {
      const auto& g = t["gates"];
      reject_unknown(g, {"xi", "xi1", "xi2", "eta", "chi"}, "tolerances.gates");
      read(g, "xi", c.gates.xi, "gates");
      read(g, "xi1", c.gates.xi1, "gates");
      read(g, "xi2", c.gates.xi2, "gates");
      read(g, "eta", c.gates.eta, "gates");
      read(g, "chi", c.gates.chi, "gates");
    }
  }
  read(j, "seed", c.seed, "config");
  read(j, "output_dir", c.output_dir, "config");
  read(j, "threads", c.threads, "config");
  if (j.contains("solver")) {
    reject_unknown(j["solver"], {"steps_per_unit", "max_iter"}, "solver");
    read(j["solver"], "steps_per_unit", c.steps_per_unit, "solver");
    read(j["solver"], "max_iter", c.max_iter, "solver");
  }
  if (j.contains("bvp")) {
    const auto& b = j["bvp"];
    reject_unknown(b, {"t", "grid_n", "x1", "y2"}, "bvp");
    read(b, "t", c.bvp.t, "bvp");
    read(b, "grid_n", c.bvp.grid_n, "bvp");
    read(b, "x1", c.bvp.x1, "bvp");
    read(b, "y2", c.bvp.y2, "bvp");
  }
  if (j.contains("manifold")) {
    const auto& m = j["manifold"];
    reject_unknown(m, {"branch", "nodes", "radius", "steps_per_unit", "base_samples"}, "manifold");
    read(m, "branch", c.manifold.branch, "manifold");
    read(m, "nodes", c.manifold.nodes, "manifold");
    read(m, "radius", c.manifold.radius, "manifold");
    read(m, "steps_per_unit", c.manifold.steps_per_unit, "manifold");
    read(m, "base_samples", c.manifold.base_samples, "manifold");
  }
  if (j.contains("foliation")) {
    const auto& f = j["foliation"];
    reject_unknown(f, {"sigma0", "horizon", "step", "nodes", "z0"}, "foliation");
    read(f, "sigma0", c.foliation.sigma0, "foliation");
    read(f, "horizon", c.foliation.horizon, "foliation");
    read(f, "step", c.foliation.step, "foliation");
    read(f, "nodes", c.foliation.nodes, "foliation");
    read(f, "z0", c.foliation.z0, "foliation");
  }
  if (j.contains("nhim")) {
    const auto& n = j["nhim"];
    reject_unknown(n, {"nodes", "sigma", "rho", "theta0", "s0", "tracking_steps"}, "nhim");
    read(n, "nodes", c.nhim.nodes, "nhim");
    read(n, "sigma", c.nhim.sigma, "nhim");
    read(n, "rho", c.nhim.rho, "nhim");
    read(n, "theta0", c.nhim.theta0, "nhim");
    read(n, "s0", c.nhim.s0, "nhim");
    read(n, "tracking_steps", c.nhim.tracking_steps, "nhim");
  }
  if (j.contains("check")) {
    const auto& k = j["check"];
    reject_unknown(k, {"pairs", "time", "radius"}, "check");
    read(k, "pairs", c.check.pairs, "check");
    read(k, "time", c.check.time, "check");
    read(k, "radius", c.check.radius, "check");
  }
  c.validate();
  return c;
}

void RunConfig::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorKind::ConfigInvalid, what); };
  const auto ids = problem_ids();
  if (std::find(ids.begin(), ids.end(), problem_id) == ids.end()) bad("unknown problem '" + problem_id + "'");
  for (const auto& s : pipeline)
    if (std::find(known_stages().begin(), known_stages().end(), s) == known_stages().end())
      bad("unknown stage '" + s + "'");
  if (!(picard_tol > 0) || !(graph_tol > 0)) bad("tolerances must be positive");
  if (!(steps_per_unit > 0) || max_iter < 1) bad("solver settings must be positive");
  if (!(bvp.t > 0) || bvp.grid_n < 0) bad("bvp.t must be positive and grid_n non-negative");
  if (manifold.branch != "unstable" && manifold.branch != "stable") bad("manifold.branch must be unstable or stable");
  if (manifold.nodes != 0 && (manifold.nodes < 3 || manifold.nodes % 2 == 0)) bad("manifold.nodes must be odd and >= 3");
  if (!(manifold.radius > 0) || !(manifold.steps_per_unit > 0) || manifold.base_samples < 1)
    bad("manifold radius, steps_per_unit and base_samples must be positive");
  if (!(foliation.sigma0 > 0) || !(foliation.horizon > 0) || !(foliation.step > 0)) bad("foliation sizes must be positive");
  if (foliation.nodes < 3 || foliation.nodes % 2 == 0) bad("foliation.nodes must be odd and >= 3");
  if (nhim.nodes < 3 || nhim.nodes % 2 == 0 || !(nhim.sigma > 0) || !(nhim.rho > 0) || nhim.tracking_steps < 2)
    bad("nhim settings out of range");
  if (check.time < 0 || check.radius < 0) bad("check.time and check.radius must be non-negative");
}

std::string RunResult::manifest_json() const {
  json a = json::array();
  for (const auto& e : manifest) a.push_back({{"file", e.file}, {"sha256", e.sha256}, {"stage", e.stage}});
  return a.dump(2);
}

RunResult run_pipeline(const RunConfig& config, const RunOptions& options) {
  config.validate();
  Context c{config, options, std::filesystem::path(config.output_dir), {}, {}, {}, std::nullopt};
  std::filesystem::create_directories(c.dir);
  if (!config.pipeline.empty()) c.desc = instantiate(config.problem_id, config.problem_params);
  for (const auto& stage : config.pipeline) {
    c.stage = stage;
    try {
      if (stage == "certify") stage_certify(c);
      else if (stage == "solve-bvp") stage_solve_bvp(c);
      else if (stage == "manifold") stage_manifold(c);
      else if (stage == "foliation") stage_foliation(c);
      else if (stage == "nhim") stage_nhim(c);
      else stage_check(c);
    } catch (const GateFailure& g) {
      c.result.exit_status = 3;
      break;
    } catch (const Error& e) {
      if (is_gate_error(e.kind())) {
        c.result.failed_gates.push_back(stage + ":" + std::string(to_string(e.kind())));
        if (!options.allow_failed_gates) {
          c.result.exit_status = 3;
          break;
        }
        continue;
      }
      throw Error(ErrorKind::StageFailed, stage + ": " + e.what());
    }
  }
  io::write_text_file(c.dir / "manifest.json", c.result.manifest_json());
  return c.result;
}

}  // namespace dichotomy
