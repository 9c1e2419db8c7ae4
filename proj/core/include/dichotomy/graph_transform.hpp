#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dichotomy/ab_certificates.hpp"
#include "dichotomy/correspondence.hpp"
#include "dichotomy/dichotomous_solver.hpp"
#include "dichotomy/types.hpp"

namespace dichotomy {

/// Uniform tensor grid on [−R, R]^dim with an odd node count per axis, so the
/// origin is a node. Node index is little-endian in the axes.
struct TensorGrid {
  int dim = 1;
  int nodes_per_axis = 5;
  double radius = 1.0;

  TensorGrid() = default;
  TensorGrid(int dim, int nodes_per_axis, double radius);

  int size() const;
  double spacing() const;
  Vec node(int index) const;
  int origin_index() const;
  /// Index of the node offset by one step along `axis`, or −1 at the border.
  int neighbor(int index, int axis, int step) const;
};

/// Lipschitz graphs f_ω: X_ω ⊃ grid → Y_ω over a finite sample of base points.
/// Between samples the family blends linearly (periodic wrap when period > 0).
struct GraphFamily {
  std::vector<double> base_samples;
  double period = 0.0;
  TensorGrid grid;
  int dim_y = 1;
  std::vector<Mat> values;  // per sample: dim_y × grid.size()

  double lip_estimate = 0.0;
  std::vector<double> section_offset;  // |f_ω(0)|
  std::vector<double> offset_bound;    // K·min_{r ∈ {t0, 2t0}} η(r, ω)
  double invariance_residual = 0.0;    // at t0
  std::map<double, double> invariance_by_time;
  struct EtaEntry {
    double t, omega, eta;
  };
  std::vector<EtaEntry> eta_profile;

  double t0 = 0.0;
  double theta = 0.0;
  double offset_constant = 0.0;  // K = (θ·sup β + 1)/(1 − θ)
  int iterations = 0;
  std::vector<double> increments;
  double x_map_lip = 0.0;  // Lip of the induced base map on the final sweep
  std::size_t domain_escapes = 0;

  static GraphFamily zeros(std::vector<double> samples, double period, const TensorGrid& grid, int dim_y);

  /// Multilinear value at sample i; coordinates outside the grid clamp and
  /// set *escaped.
  Vec eval(std::size_t sample, const Vec& x, bool* escaped = nullptr) const;
  /// Value at an arbitrary base point, blending neighbouring samples.
  Vec eval_at(double omega, const Vec& x, bool* escaped = nullptr) const;
  /// sup over samples and adjacent nodes of |Δf|/|Δx|.
  double node_lipschitz() const;
  double sup_distance(const GraphFamily& other) const;

  std::string to_json_meta() const;
  /// Node table: sample, omega, x coordinates, y values.
  std::string to_csv() const;
};

/// Cocycle correspondence over a sampled base. `embed` maps graph coordinates
/// to the X-input of H; `transport` maps an X-output over ω_img back to
/// (base point, graph coordinates). Both default to the identity.
struct GraphCocycle {
  int dim_x = 1;  // graph domain dimension
  int dim_y = 1;
  std::vector<double> samples{0.0};
  double period = 0.0;       // > 0: base points wrap modulo period
  double base_step = 0.25;   // t0 is chosen among multiples of this step
  std::function<GeneratingCorrespondence(double t, double omega)> at;
  std::function<double(double omega, double t)> base_flow;
  std::function<Vec(double omega, const Vec& x)> embed;
  std::function<std::pair<double, Vec>(double omega_img, const Vec& x_out)> transport;

  double flow(double omega, double t) const;
  Vec embed_x(double omega, const Vec& x) const;
  std::pair<double, Vec> transport_x(double omega_img, const Vec& x_out) const;
};

/// H̃(t, ω) = dual(H(t, (−t)ω)); embed/transport reset to the identity.
GraphCocycle dual_cocycle(const GraphCocycle& c);

/// Point base: one sample, trivial base flow.
GraphCocycle autonomous_cocycle(int dim_x, int dim_y, std::function<GeneratingCorrespondence(double t)> h);

struct PullbackResult {
  Mat f1;      // dim_y × nodes
  Mat x1_map;  // H's X-output per node
  int max_inner_iterations = 0;
  std::size_t domain_escapes = 0;
};

/// Graph f2 seen from the image fiber: y2 = f2(x_out), flagging escapes.
using ImageGraph = std::function<Vec(const Vec& x_out, bool* escaped)>;

/// One graph-transform step: per node x solve u = F(x, f2(u)), then
/// f1(x) = G(x, f2(u)).
PullbackResult pullback_graph_step(const GeneratingCorrespondence& h, const ImageGraph& f2, double f2_lip,
                                   const std::vector<Vec>& inputs, const ABConstants& constants, double tol,
                                   int max_iter = 500, const Mat* warm_start = nullptr, std::size_t threads = 0);

/// Convenience form on a single-sample graph family and its grid; throws
/// DomainEscape when some x1(x) leaves that grid.
PullbackResult pullback_graph_step(const GeneratingCorrespondence& h, const GraphFamily& f2,
                                   const ABConstants& constants, double tol);

enum class SectionMode { InvariantZero, PseudoStable, YBounded };

struct SectionSpec {
  SectionMode mode = SectionMode::InvariantZero;
  /// η(t, ω); empty means measured as |Ĥ(t, ω)(0, 0)|.
  std::function<double(double t, double omega)> eta_fn;
  std::function<double(double omega)> eps_fn;
  std::function<double(double omega)> eps1_fn;

  /// Checks η(t, rω) ≤ ε^r(ω)η(t, ω) within 5% and 0 ≤ ε ≤ ε1 on samples.
  void validate(const std::vector<double>& samples, const std::function<double(double, double)>& base_flow) const;
};

struct GraphOptions {
  double t0 = 0.0;  // 0 selects the smallest admissible multiple of base_step
  int max_t0_steps = 50;
  double theta_target = 0.9;
  int nodes_per_axis = 41;
  double radius = 0.5;
  double tol = 1e-10;
  int max_iter = 200;
  double inner_tol = 0.0;  // 0 means tol / 10
  int inner_max_iter = 500;
  std::size_t threads = 0;
  bool extra_residuals = true;         // invariance also at t0/2 and 2t0
  const GraphFamily* initial = nullptr;
};

/// θ(t0) = sup_ω (c²(λuλs)^{t0} + c·λu^{t0}ε1^{t0}) / (1 − αβ).
double graph_theta(const std::vector<ABCertificate>& constants, const SectionSpec& section,
                   const std::vector<double>& samples, double t0);

/// Fixed point of the graph transform over the sampled base.
GraphFamily invariant_graph(const GraphCocycle& cocycle, const SectionSpec& section,
                            const std::vector<ABCertificate>& constants, const GraphOptions& opts = {});

/// Graphs on σ0-balls under the strengthened conditions αβ′ < 1/2, λs < 1.
GraphFamily local_stable_graph(const GraphCocycle& cocycle, double sigma0, const std::vector<ABCertificate>& constants,
                               GraphOptions opts = {}, const SectionSpec& section = {});

/// Multilinear interpolation of node data (one column per node).
Vec grid_interpolate(const TensorGrid& grid, const Mat& data, const Vec& x, bool* escaped = nullptr);

/// One step of the map induced on Graph f by H(t, ω): the image point over
/// the transported base point, in graph coordinates.
struct InducedStep {
  double omega = 0.0;
  Vec x;      // graph coordinates at the image base point
  Vec y;      // f at the image point
  Vec y_src;  // G value at the source, which equals f_ω(x) on an invariant graph
};
InducedStep induced_map(const GraphCocycle& cocycle, const GraphFamily& f, double omega, const Vec& x, double t,
                        const ABConstants& constants, double tol);

/// Orbit of z0 sampled at uniform times; states in ambient coordinates.
struct BaseOrbit {
  std::vector<double> times;
  std::vector<Vec> states;
  double step() const;
};

/// Strong stable fibres along a sampled orbit. The cocycle acts on
/// deviations from the orbit with ω = time.
struct FiberResult {
  std::vector<double> times;
  TensorGrid grid;
  int dim_y = 1;
  std::vector<Mat> graphs;  // per orbit sample
  std::vector<Mat> x_maps;  // per step: X-output per node
  std::size_t horizon_samples = 0;  // samples with a converged fibre

  /// Deviation (x, g(x)) at orbit sample i.
  Vec fiber_value(std::size_t i, const Vec& x) const;
  /// Induced forward deviations of the fibre point over x at time 0:
  /// separations max(|x_i|, |g_i(x_i)|) on the horizon.
  std::vector<double> separations(const Vec& x0) const;
};

FiberResult strong_stable_fiber(const GraphCocycle& deviation_cocycle, const BaseOrbit& orbit, double sigma0,
                                const ABCertificate& constants, double tol, int nodes_per_axis = 21,
                                double horizon = 10.0, double padding = 10.0);

/// Forward orbit of a well-posed problem by RK4 with solver-grid substeps,
/// sampled every dt from t_start.
BaseOrbit forward_orbit(const EvolutionProblem& p, const Vec& z0, double t_start, double dt, int samples,
                        const SolverOptions& opts = {});

/// Deviations d = z − z0(t) from a sampled orbit, in the problem's
/// splitting: d' = a(t)A d + f(t, z0 + d) − f(t, z0). Between samples the
/// orbit is re-integrated on the solver grid of each step.
GraphCocycle orbit_deviation_cocycle(const EvolutionProblem& p, const BaseOrbit& orbit, const SolverOptions& opts = {});

/// Per-unit-time decay rate e^{slope} from a least-squares fit of log s(t).
double fit_decay_rate(const std::vector<double>& times, const std::vector<double>& seps, double floor = 1e-13);

enum class ProbeOrder { First, Holder };

struct SmoothnessReport {
  ProbeOrder order = ProbeOrder::First;
  double discrepancy = 0.0;              // First: max |D⁺f − D⁻f|
  std::vector<std::vector<double>> derivative;  // First: central differences per sample (interior nodes, axis 0)
  double holder_exponent = 0.0;          // Holder: log-log slope over base lags
  std::vector<double> lag_sup;           // Holder: sup per lag
  bool degenerate = false;
  std::string to_json() const;
};

SmoothnessReport smoothness_probe(const GraphFamily& g, ProbeOrder order);

}  // namespace dichotomy
