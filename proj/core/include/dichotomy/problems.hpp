#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dichotomy/ab_certificates.hpp"
#include "dichotomy/dichotomous_solver.hpp"
#include "dichotomy/nhim.hpp"

namespace dichotomy {

using ProblemParams = std::map<std::string, double>;

struct ParamRange {
  std::string name;
  double value = 0.0;  // default
  double lo = 0.0, hi = 0.0;
  bool integer = false;
  std::string help;
};

/// Per-mode linear rates of a spectral truncation. Center modes have
/// rate_s = rate_u = 0 and hyperbolic = false.
struct ModeRate {
  int mode = 0;
  double rate_s = 0.0;
  double rate_u = 0.0;
  bool hyperbolic = true;
};

/// Closed-form invariant objects. Planar graphs use ambient coordinates
/// (z0, z1): the unstable manifold is z1 = unstable_graph(z0) and the stable
/// manifold z0 = stable_graph(z1), both for |argument| ≤ domain.
struct ProblemOracle {
  enum class Kind { None, PlanarGraphs, PerturbedCircle };
  Kind kind = Kind::None;
  std::string formula;
  std::function<double(double)> unstable_graph;
  std::function<double(double)> stable_graph;
  double domain = 0.0;
  /// Σᶜ height over the angle for PerturbedCircle.
  std::function<double(double)> circle_height;
};

struct ProblemDescriptor {
  std::string id;
  std::string description;
  ProblemParams params;
  EvolutionProblem problem;
  double cut = 0.0;
  int modes = 0;
  std::vector<ModeRate> mode_rates;
  std::vector<int> center_modes;
  double retraction_radius = 0.0;  // nonlinearity is frozen outside this ball
  double check_time = 1.0;         // representative horizon for (A)(B) sampling
  double check_radius = 0.5;       // boundary data radius for sampling
  std::optional<NhimModel> nhim;
  ProblemOracle oracle;

  ABCertificate certificate(double eps1 = 1.0) const;
  GeneratingCorrespondence correspondence(double t, double omega = 0.0, const SolverOptions& opts = {}) const;
  std::string to_json() const;
};

std::vector<std::string> problem_ids();
/// Documented parameter ranges with defaults.
const std::vector<ParamRange>& param_ranges(const std::string& id);
/// Defaults overlaid with `params`; unknown names and out-of-range values throw.
ProblemDescriptor instantiate(const std::string& id, const ProblemParams& params = {});
/// JSON array describing every catalog entry and its parameters.
std::string problems_listing();

}  // namespace dichotomy
