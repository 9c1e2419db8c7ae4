#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dichotomy/nhim.hpp"
#include "dichotomy/problems.hpp"

namespace dichotomy {

/// Versioned run configuration. Every key is optional on input; unknown
/// keys are rejected. Serialization round-trips exactly.
struct RunConfig {
  int schema = 1;
  std::string problem_id = "scalar_saddle";
  ProblemParams problem_params;
  std::vector<std::string> pipeline;

  double picard_tol = 1e-12;
  double graph_tol = 1e-10;
  GateThresholds gates{};

  std::uint64_t seed = 0;
  std::string output_dir = "out";
  std::size_t threads = 0;

  double steps_per_unit = 200.0;
  int max_iter = 200;

  struct Bvp {
    double t = 1.0;
    int grid_n = 0;  // 0: from steps_per_unit
    std::vector<double> x1, y2;  // empty: a fixed interior point
  } bvp;

  struct Manifold {
    std::string branch = "unstable";  // or "stable"
    int nodes = 0;                    // 0: by graph dimension
    double radius = 0.5;
    double steps_per_unit = 1000.0;
    int base_samples = 16;  // periodic drivers
  } manifold;

  struct Foliation {
    double sigma0 = 0.01;
    double horizon = 10.0;
    double step = 0.5;
    int nodes = 21;
    std::vector<double> z0;  // empty: on the stable subspace
  } foliation;

  struct Nhim {
    int nodes = 11;
    double sigma = 0.1;
    double rho = 0.1;
    double theta0 = 0.3;
    double s0 = 0.05;
    int tracking_steps = 20;
  } nhim;

  struct Check {
    std::size_t pairs = 10000;
    double time = 0.0;    // 0: problem default
    double radius = 0.0;  // 0: problem default
  } check;

  std::string to_json() const;
  static RunConfig from_json(std::string_view text);
  /// Semantic checks beyond the schema; throws ConfigInvalid.
  void validate() const;
};

const std::vector<std::string>& known_stages();

struct ManifestEntry {
  std::string file;
  std::string sha256;
  std::string stage;
};

struct RunResult {
  int exit_status = 0;  // 0 ok, 3 failed gates
  std::vector<ManifestEntry> manifest;
  std::vector<std::string> failed_gates;
  std::string manifest_json() const;
};

struct RunOptions {
  bool allow_failed_gates = false;
};

/// Runs the stages in order, writing artifacts and manifest.json under
/// output_dir. Stage errors surface as StageFailed naming the stage; gate
/// failures (HypothesisFailure, GapViolated, (A)(B) violations) end the run
/// with exit status 3 unless allowed.
RunResult run_pipeline(const RunConfig& config, const RunOptions& options = {});

}  // namespace dichotomy
