#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dichotomy/ab_certificates.hpp"
#include "dichotomy/dichotomous_solver.hpp"
#include "dichotomy/graph_transform.hpp"

namespace dichotomy {

/// Sampled immersed base Σ with its splitting Πˢ + Πᶜ + Πᵘ = I per sample.
/// Circles are parametrised by angle; a point base has an empty centre.
struct ImmersedBase {
  enum class Kind { Point, Circle };
  Kind kind = Kind::Point;
  int ambient_dim = 3;
  double circle_radius = 1.0;
  std::vector<double> params;  // angle per sample (0 for a point)
  std::vector<Vec> samples;
  std::vector<Mat> frame_s, frame_c, frame_u;  // orthonormal columns
  std::vector<Mat> proj_s, proj_c, proj_u;
  double eps1 = 0.2;                                 // chart radius
  std::vector<std::pair<double, double>> chi_profile;  // (ε, χ(ε))
  double delta0 = 0.0;
  double lip_L = 0.0, lip_L0 = 0.0;

  int ds() const { return frame_s.empty() ? 0 : static_cast<int>(frame_s[0].cols()); }
  int dc() const { return frame_c.empty() ? 0 : static_cast<int>(frame_c[0].cols()); }
  int du() const { return frame_u.empty() ? 0 : static_cast<int>(frame_u[0].cols()); }
  /// Tabulated χ at the smallest profile entry ≥ ε (0 for a point).
  double chi(double eps) const;
  /// Secant scan: sup |d − Πᶜ_{m1}d|/|d| over sample pairs with |d| ≤ ε.
  double secant_deviation(double eps) const;
};

/// Frames as functions of the angle on a circle of given radius in ℝ³.
struct CircleFrames {
  std::function<Mat(double)> s, c, u;
};

/// Projections from the frames, χ profile, δ0, (L, L0); then (H1)–(H4).
ImmersedBase make_circle_base(int n_samples, double radius, const CircleFrames& frames, double eps1 = 0.2);
ImmersedBase make_point_base(const Vec& point, const Mat& frame_s, const Mat& frame_u);
/// Throws InvariantFailure naming the first failed hypothesis.
void verify_base(const ImmersedBase& base);
/// Catalog bases: nhim_circle (trichotomy frames), attracting_circle, scalar_saddle (point).
ImmersedBase build_base(const std::string& problem_id, int n_samples);

/// Circle model in tubular coordinates (θ, w), w = (s, u): normal parts
/// ds + du, rigid rotation θ̇ = ν on the base.
struct NhimModel {
  std::string id;
  ImmersedBase base;
  int ds = 1, du = 1;
  double nu = 1.0;
  Mat js, ju;
  double eps_c = 0.0, eps_s = 0.0, eps_u = 0.0;  // Lip of the θ̃, s and u rows of the remainder
  double tube_radius = 0.2;
  double eta = 0.0;
  std::function<Vec(const Vec& p)> ambient_field;
  std::function<Vec(double theta, const Vec& w)> tubular_field;  // (θ̇, ẇ); optional
  std::function<Vec(double theta, const Vec& w)> to_ambient;

  /// Nearest-point decomposition p ↦ (θ, w) by Newton on the centre chart.
  std::pair<double, Vec> to_tubular(const Vec& p) const;
  /// (θ̇, ẇ) at (θ, w), from tubular_field or pulled back from the ambient field.
  Vec tubular_rhs(double theta, const Vec& w) const;
};

/// ṙ = −2(r − 1), θ̇ = 1, ż = 4z + η cos θ around the unit circle in ℝ³.
NhimModel trichotomy_circle(double eta, int n_samples = 64);
/// Same base with ż = −4z + η cos θ: both normal directions contract.
NhimModel attracting_circle(double eta, int n_samples = 64);

enum class BundleKind { CenterStable, Stable };

/// Relative dynamics at base angle θ: z̃ = (θ̃, s, u) ↦ tubular field at
/// θ + ντ + θ̃ minus the rotation, with X = (θ̃, s), Y = u (center-stable)
/// or X = s, Y = (θ̃, u) (stable).
EvolutionProblem bundle_problem(const NhimModel& model, double theta, BundleKind kind);
GeneratingCorrespondence bundle_correspondence(const NhimModel& model, double t, double theta, BundleKind kind,
                                               const SolverOptions& opts = {});
/// Certificate from the declared row constants and block rates.
ABCertificate bundle_certificate(const NhimModel& model, BundleKind kind, double eps1 = 1.0);

struct GateThresholds {
  double xi = 0.05, xi1 = 0.05, xi2 = 0.05, eta = 0.02, chi = 0.1;
};

struct GateEntry {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool pass = true;
};

struct NhimParams {
  double t0 = 0.0;  // 0: automatic
  double sigma = 0.1;  // normal-stable graph radius
  double rho = 0.1;    // normal-unstable graph radius
  int nodes = 21;
  double tol = 1e-10;
  SolverOptions solver{};
  GateThresholds gates{};
  bool enforce_gates = true;
  std::size_t threads = 0;
};

struct CenterStableResult {
  GraphFamily h_cs;
  GraphCocycle cocycle;
  ABCertificate certificate;
  std::vector<GateEntry> gates;
  std::map<std::string, double> hypotheses;  // measured (A1)–(A3) quantities
  double chi_star = 0.0;
  double lipschitz_bound = 0.0;  // (1 + χ*)β′ + χ*
  double b_constant = 0.0;       // 2·sup c λ_cs^{t0} β
  double lambda_cs_measured = 0.0;
  std::string to_json() const;
};

CenterStableResult center_stable_persist(const NhimModel& model, const NhimParams& params,
                                         const GraphFamily* initial = nullptr);

struct TrichotomyGraphs {
  CenterStableResult cs;
  GraphFamily h_cu;
  GraphCocycle cu_cocycle;
  ABCertificate cu_certificate;
  std::vector<double> theta;
  std::vector<Vec> sigma_c;  // (s, u) per sample
  double sigma = 0.0, rho = 0.0, eps_chart = 0.0;
  double mu_cs = 0.0, mu_cu = 0.0, mu_c = 0.0;
  std::map<double, double> sigma_c_residual;  // t ↦ invariance residual

  /// Σᶜ at an arbitrary angle (linear blend of samples).
  Vec center_at(double theta) const;
  std::string to_csv() const;  // θ, r, z (circle) per sample
};

TrichotomyGraphs trichotomy_persist(const NhimModel& model, const NhimParams& params);

/// RK4 in ambient coordinates; throws OrbitLeavesTube once the tubular
/// normal part exceeds the tube radius.
std::vector<Vec> integrate_ambient(const NhimModel& model, const Vec& p0, double horizon, double dt);

/// Forward orbit on W^{cs} by iterating the induced map; states are
/// tubular (θ, s, u) triples per step of t0.
struct TubeOrbit {
  std::vector<double> times;
  std::vector<double> theta;
  std::vector<Vec> w;
};
TubeOrbit cs_orbit(const NhimModel& model, const CenterStableResult& cs, double theta0, const Vec& s0, int steps);

struct TrackingReport {
  double shadow_phase = 0.0;
  std::vector<double> times, distances;
  double fitted_rate = 0.0;
  double expected_rate = 0.0;
  std::string to_json() const;
};

TrackingReport tracking_check(const NhimModel& model, const TrichotomyGraphs& g, const TubeOrbit& orbit);

struct LeafResult {
  FiberResult fiber;
  double theta0 = 0.0;
  Vec w0;
  double fitted_rate = 0.0;
  double lipschitz = 0.0;
  Vec tangent;  // unit tangent of the leaf at z0 in (s, θ̃, u) coordinates (ds = 1)
  /// Leaf points in ambient coordinates over the plaque grid.
  std::vector<Vec> ambient_points(const NhimModel& model) const;
};

/// Strong stable leaf through z0 = (θ0, w0) on W^{cs}.
LeafResult strong_foliation_leaf(const NhimModel& model, const CenterStableResult& cs, double theta0, const Vec& w0,
                                 double sigma0, const NhimParams& params, double horizon = 10.0);

}  // namespace dichotomy
