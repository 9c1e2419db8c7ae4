#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dichotomy/types.hpp"

namespace dichotomy {

struct CorrDims {
  int x1 = 0;
  int y1 = 0;
  int x2 = 0;
  int y2 = 0;
};

/// (sup_x Lip F(x,·), sup_y Lip F(·,y), sup_x Lip G(x,·), sup_y Lip G(·,y)).
struct LipTable {
  double f_in_y = 0.0;
  double f_in_x = 0.0;
  double g_in_y = 0.0;
  double g_in_x = 0.0;
};

/// ((x1, y1), (x2, y2)) with y1 = G(x1, y2), x2 = F(x1, y2).
struct GraphPoint {
  Vec x1, y1, x2, y2;
};

/// A correspondence known only through its generating map (F, G).
/// Evaluation is pure; one joint call yields both images because every
/// solver-backed instance produces them from the same computation.
class GeneratingCorrespondence {
 public:
  using Map = std::function<Vec(const Vec&, const Vec&)>;
  /// Returns (F(x1, y2), G(x1, y2)).
  using Joint = std::function<std::pair<Vec, Vec>(const Vec&, const Vec&)>;

  GeneratingCorrespondence() = default;
  GeneratingCorrespondence(CorrDims dims, Joint joint, std::optional<LipTable> lip = std::nullopt);
  static GeneratingCorrespondence from_maps(CorrDims dims, Map f, Map g, std::optional<LipTable> lip = std::nullopt);

  Vec eval_f(const Vec& x1, const Vec& y2) const { return eval(x1, y2).first; }
  Vec eval_g(const Vec& x1, const Vec& y2) const { return eval(x1, y2).second; }
  std::pair<Vec, Vec> eval(const Vec& x1, const Vec& y2) const;
  GraphPoint graph_point(const Vec& x1, const Vec& y2) const;

  const CorrDims& dims() const { return dims_; }
  const std::optional<LipTable>& lip_table() const { return lip_; }
  bool valid() const { return static_cast<bool>(joint_); }

 private:
  CorrDims dims_;
  Joint joint_;
  std::optional<LipTable> lip_;
};

GeneratingCorrespondence identity_correspondence(int dim_x, int dim_y);

/// F = fx·x1 + fy·y2, G = gx·x1 + gy·y2.
GeneratingCorrespondence linear_correspondence(const Mat& fx, const Mat& fy, const Mat& gx, const Mat& gy);

/// F̃(a, b) = G(b, a), G̃(a, b) = F(b, a).
GeneratingCorrespondence dual(const GeneratingCorrespondence& h);

/// Generating map of H⁻¹ with roles exchanged. The inverse maps the target
/// factor back to the source, so its "stable" slot is the old Y: the result
/// coincides with the dual and its graph points are ((y2, x2), (y1, x1)).
GeneratingCorrespondence invert(const GeneratingCorrespondence& h);

struct ComposedSample {
  Vec x1, y1;  // source point, on Graph h1
  Vec x2, y2;  // intermediate point
  Vec x3, y3;  // target point, on Graph h2
  double residual = 0.0;
};

/// Composition h2∘h1 as a generating map: the intermediate y2 solves
/// y2 = G2(F1(x1, y2), y3) by fixed-point iteration.
GeneratingCorrespondence compose(const GeneratingCorrespondence& h2, const GeneratingCorrespondence& h1,
                                 double tol = 1e-13, int max_iter = 500);

/// Emits verified triples for each (x1, y3) in `samples`.
std::vector<ComposedSample> compose_on_samples(const GeneratingCorrespondence& h2, const GeneratingCorrespondence& h1,
                                               const std::vector<std::pair<Vec, Vec>>& samples, double tol = 1e-13,
                                               int max_iter = 500);

/// Finite-difference Lipschitz estimate of (F, G) in each slot.
LipTable estimate_lip_table(const GeneratingCorrespondence& h, const std::vector<std::pair<Vec, Vec>>& points,
                            double step = 1e-6);

struct ABConstants {
  double alpha = 0.0;
  double alpha_prime = 0.0;
  double beta = 0.0;
  double beta_prime = 0.0;
  double lambda_s = 1.0;
  double lambda_u = 1.0;
};

/// Two boundary inputs (x1, y2), (x1', y2') of a generating map.
struct InputPair {
  Vec x1, y2, x1p, y2p;
};

/// Seeded sampler, uniform over the product of balls X(rx) × Y(ry).
class BallPairSampler {
 public:
  BallPairSampler(int dim_x, int dim_y, double radius_x, double radius_y, std::uint64_t seed,
                  std::size_t limit = static_cast<std::size_t>(-1));
  std::optional<InputPair> next();
  std::uint64_t seed() const { return seed_; }

 private:
  int dx_, dy_;
  double rx_, ry_;
  std::uint64_t seed_;
  std::size_t limit_, drawn_ = 0;
  std::mt19937_64 engine_;
  Vec draw_ball(int dim, double radius);
};

/// Pairs concentrated near the (A) and (B) cones, alternating: the second
/// point differs from the first by a step whose x-part (A turns) or y-part
/// (B turns) is at most `cone` times the other part. Steps stay below half
/// the ball radii.
class ConePairSampler {
 public:
  ConePairSampler(int dim_x, int dim_y, double radius_x, double radius_y, double cone, std::uint64_t seed,
                  std::size_t limit = static_cast<std::size_t>(-1));
  std::optional<InputPair> next();

 private:
  BallPairSampler ball_;
  int dx_, dy_;
  double rx_, ry_, cone_;
  std::size_t limit_, drawn_ = 0;
  std::mt19937_64 engine_;
  Vec direction(int dim);
};

using PairSource = std::function<std::optional<InputPair>()>;

/// Same inputs seen through the dual: (a, b) = (y2, x1).
InputPair transport_to_dual(const InputPair& p);

enum class ABCondition { A1 = 0, A2 = 1, B1 = 2, B2 = 3 };

struct ConditionReport {
  std::string condition;
  std::size_t premises = 0;
  std::size_t count = 0;
  double worst_margin = 0.0;  // −∞ when no premise held
};

struct PairOutcome {
  std::array<bool, 4> premise{};
  std::array<double, 4> margin{};
};

struct ViolationReport {
  std::uint64_t seed = 0;
  std::size_t n_pairs = 0;
  double margin_tol = 1e-9;
  std::array<ConditionReport, 4> conditions;
  std::vector<PairOutcome> pairs;

  std::size_t total_violations() const;
  const ConditionReport& at(ABCondition c) const { return conditions[static_cast<int>(c)]; }
  std::string to_json() const;
};

struct CheckOptions {
  double margin_tol = 1e-9;
  bool keep_pairs = false;
  std::size_t threads = 0;
  std::uint64_t seed = 0;  // recorded in the report
};

/// Brute-force (A)(B) oracle. Premises use the exact inequalities; a
/// conclusion counts as violated when its margin exceeds margin_tol.
ViolationReport empirical_ab_check(const GeneratingCorrespondence& h, const ABConstants& constants,
                                   const PairSource& sampler, std::size_t n_pairs, const CheckOptions& opts = {});

}  // namespace dichotomy
